"""Coordinate-free topological invariant of a map.

The invariant is computed from the sub-polygonization: sub-lines lying on
a geometry boundary (polygon edges, polylines) are the edges of the map;
the remaining sub-lines only separate faces of the refinement and are
dissolved. Vertices of degree two that are not point geometries are
dissolved as well, so corners and polyline bends do not show up and the
result depends on the topology of the map alone.

Orientation convention for ``Between``: ``("←", p, e, n, v)`` means that
edges ``p``, ``e``, ``n`` are consecutive in counter-clockwise order
around vertex ``v``; ``"→"`` is the clockwise reading of the same triple.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import networkx as nx

from .errors import UnknownGeometryError
from .geom import Location, PointGeom, Polygon, Polyline, point_in_ring, point_segment_distance
from .layer import Layer
from .subdivision import CellKind, Overlay, build_overlay

CCW = "←"
CW = "→"


@dataclass
class TopologicalInvariant:
    vertex: set[str] = field(default_factory=set)
    edge: set[str] = field(default_factory=set)
    face: set[str] = field(default_factory=set)
    exterior_face: set[str] = field(default_factory=set)
    regions: set[tuple[str, str]] = field(default_factory=set)
    endpoints: set[tuple[str, str, str]] = field(default_factory=set)
    face_edge: set[tuple[str, str]] = field(default_factory=set)
    face_vertex: set[tuple[str, str]] = field(default_factory=set)
    between: set[tuple[str, str, str, str, str]] = field(default_factory=set)
    # embedding kept aside for locating cells; not part of the invariant
    edge_coords: dict[str, list] = field(default_factory=dict, repr=False)
    vertex_coords: dict[str, tuple] = field(default_factory=dict, repr=False)
    face_rings: dict[str, list] = field(default_factory=dict, repr=False)

    RELATIONS = (
        "vertex",
        "edge",
        "face",
        "exterior_face",
        "regions",
        "endpoints",
        "face_edge",
        "face_vertex",
        "between",
    )

    def euler(self) -> int:
        return len(self.vertex) - len(self.edge) + len(self.face)

    def components(self) -> int:
        g = nx.MultiGraph()
        g.add_nodes_from(self.vertex)
        for e, a, b in self.endpoints:
            g.add_edge(a, b)
        return nx.number_connected_components(g) if self.vertex else 0

    def region_names(self) -> list[str]:
        return sorted({r for r, _ in self.regions})

    def region_faces(self, name: str) -> set[str]:
        out = {c for r, c in self.regions if r == name and c in self.face}
        if not any(r == name for r, _ in self.regions):
            raise UnknownGeometryError(f"unknown region {name!r}")
        return out

    # locating (uses the embedding; for tests and labels only)

    def locate_vertex(self, p, tol: float = 1e-9) -> str:
        for v, q in self.vertex_coords.items():
            if abs(q[0] - p[0]) <= tol and abs(q[1] - p[1]) <= tol:
                return v
        raise KeyError(p)

    def locate_edge(self, p, tol: float = 1e-9) -> str:
        for e, segs in self.edge_coords.items():
            if any(point_segment_distance(p, a, b) <= tol for a, b in segs):
                return e
        raise KeyError(p)

    def locate_face(self, p) -> str:
        for f, rings in self.face_rings.items():
            if any(point_in_ring(p, r, 0.0) is Location.INSIDE for r in rings):
                return f
        raise KeyError(p)

    def dump(self, directory: str | Path) -> Path:
        """One CSV per relation."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        heads = {
            "vertex": ("vertex",),
            "edge": ("edge",),
            "face": ("face",),
            "exterior_face": ("face",),
            "regions": ("region", "cell"),
            "endpoints": ("edge", "vertex1", "vertex2"),
            "face_edge": ("face", "edge"),
            "face_vertex": ("face", "vertex"),
            "between": ("orientation", "edge1", "edge2", "edge3", "vertex"),
        }
        names = {
            "vertex": "Vertex",
            "edge": "Edge",
            "face": "Face",
            "exterior_face": "ExteriorFace",
            "regions": "Regions",
            "endpoints": "Endpoints",
            "face_edge": "FaceEdge",
            "face_vertex": "FaceVertex",
            "between": "Between",
        }
        for rel in self.RELATIONS:
            rows = getattr(self, rel)
            with open(d / f"{names[rel]}.csv", "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(heads[rel])
                for r in sorted(rows):
                    w.writerow((r,) if isinstance(r, str) else r)
        return d


class _UF:
    def __init__(self):
        self.p: dict[int, int] = {}

    def find(self, x: int) -> int:
        self.p.setdefault(x, x)
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[max(ra, rb)] = min(ra, rb)


def _boundary_segments(g) -> list:
    if isinstance(g, Polygon):
        v = g.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]
    if isinstance(g, Polyline):
        return list(zip(g.vertices, g.vertices[1:]))
    return []


def build_invariant(source: Overlay | Sequence[Layer], region_name: Callable | None = None) -> TopologicalInvariant:
    """Invariant of the map formed by the layers of ``source``."""
    if isinstance(source, Overlay):
        ov = source
        if (ov.grid.rows, ov.grid.cols) != (1, 1):
            ov = build_overlay(list(ov.layers.values()), box=ov.box, eps=ov.eps)
    else:
        ov = build_overlay(list(source))
    name_of = region_name or (lambda layer, gid: f"{layer}.{gid}")
    eps = ov.eps.point_eps
    cells = ov.cells
    box = ov.box

    # 1. sub-lines lying on a geometry boundary
    kept: set[int] = set()
    for c in cells:
        if c.kind is not CellKind.LINE:
            continue
        a, b = c.coords
        m = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        for layer, gid in ov.owners(c.cell_id):
            g = ov.layers[layer][gid]
            if any(point_segment_distance(m, p, q) < eps for p, q in _boundary_segments(g)):
                kept.add(c.cell_id)
                break
    point_nodes: set[int] = set()
    for c in cells:
        if c.kind is CellKind.NODE:
            for layer, gid in ov.owners(c.cell_id):
                if isinstance(ov.layers[layer][gid], PointGeom):
                    point_nodes.add(c.cell_id)

    # 2. map graph on overlay nodes, then dissolve degree-2 vertices
    inc: dict[int, list[int]] = defaultdict(list)
    for s in sorted(kept):
        u, v = cells[s].node_refs
        inc[u].append(s)
        inc[v].append(s)
    keep_v = {v for v, ss in inc.items() if len(ss) != 2} | point_nodes
    edges: list[list[int]] = []  # sub-line chains
    ends: list[tuple[int, int]] = []
    used: set[int] = set()

    def other(s, v):
        a, b = cells[s].node_refs
        return b if a == v else a

    def walk(v0, s0):
        chain, v, s = [s0], v0, s0
        used.add(s0)
        while True:
            w = other(s, v)
            if w in keep_v:
                return chain, w
            nxt = [t for t in inc[w] if t != s or inc[w].count(s) > 1]
            t = nxt[0] if nxt[0] != s else nxt[-1]
            if t in used:
                return chain, w
            used.add(t)
            chain.append(t)
            v, s = w, t

    for v in sorted(keep_v):
        for s in inc.get(v, []):
            if s in used:
                continue
            chain, w = walk(v, s)
            edges.append(chain)
            ends.append((v, w))
    # closed loops with only degree-2 vertices: anchor at the smallest node
    for s in sorted(kept - used):
        if s in used:
            continue
        a = min(cells[s].node_refs)
        keep_v.add(a)
        start = min(inc[a])
        chain, w = walk(a, start)
        edges.append(chain)
        ends.append((a, w))

    inv = TopologicalInvariant()
    vname = {}
    for i, v in enumerate(sorted(keep_v, key=lambda n: cells[n].coords[0])):
        vname[v] = f"v{i}"
        inv.vertex.add(vname[v])
        inv.vertex_coords[vname[v]] = tuple(cells[v].coords[0])
    ename = {}
    sub_edge = {}
    for i, (chain, (a, b)) in enumerate(zip(edges, ends)):
        e = f"e{i}"
        ename[i] = e
        inv.edge.add(e)
        inv.endpoints.add((e,) + tuple(sorted((vname[a], vname[b]))))
        inv.edge_coords[e] = [cells[s].coords for s in chain]
        for s in chain:
            sub_edge[s] = e

    # 3. faces: merge overlay faces across dissolved sub-lines
    uf = _UF()
    faces_of_line: dict[int, list[int]] = defaultdict(list)
    outer: set[int] = set()
    for c in cells:
        if c.kind is not CellKind.POLYGON:
            continue
        uf.find(c.cell_id)
        for e in c.edge_refs:
            faces_of_line[e].append(c.cell_id)
        if any(p[0] in (box.xmin, box.xmax) or p[1] in (box.ymin, box.ymax) for p in c.coords):
            outer.add(c.cell_id)
    for s, fs in faces_of_line.items():
        if s not in kept:
            for f in fs[1:]:
                uf.union(fs[0], f)
    outer_list = sorted(outer)
    for f in outer_list[1:]:
        uf.union(outer_list[0], f)
    roots = sorted({uf.find(c.cell_id) for c in cells if c.kind is CellKind.POLYGON}, key=lambda r: cells[r].rep)
    ext_root = uf.find(outer_list[0]) if outer_list else None
    fname = {}
    for i, r in enumerate(roots):
        fname[r] = f"f{i}"
        inv.face.add(fname[r])
        if r == ext_root:
            inv.exterior_face.add(fname[r])
    for c in cells:
        if c.kind is CellKind.POLYGON:
            inv.face_rings.setdefault(fname[uf.find(c.cell_id)], []).append(c.coords)

    for s, fs in faces_of_line.items():
        if s in kept:
            for f in fs:
                inv.face_edge.add((fname[uf.find(f)], sub_edge[s]))
    for c in cells:
        if c.kind is CellKind.POLYGON:
            for v in c.node_refs:
                if v in vname:
                    inv.face_vertex.add((fname[uf.find(c.cell_id)], vname[v]))

    # 4. rotation system
    for v, vn in vname.items():
        spokes = []
        p = cells[v].coords[0]
        for s in inc.get(v, []):
            a, b = cells[s].coords
            q = b if cells[s].node_refs[0] == v else a
            if cells[s].node_refs[0] == cells[s].node_refs[1]:
                continue
            spokes.append((math.atan2(q[1] - p[1], q[0] - p[0]), sub_edge[s]))
        spokes.sort()
        rot = [e for _, e in spokes]
        k = len(rot)
        for i in range(k):
            prev, cur, nxt = rot[i - 1], rot[i], rot[(i + 1) % k]
            inv.between.add((CCW, prev, cur, nxt, vn))
            inv.between.add((CW, nxt, cur, prev, vn))

    # 5. regions
    vertex_of_node = vname
    for layer, lay in ov.layers.items():
        for gid in lay.geometries:
            rn = name_of(layer, gid)
            for cid in ov.cells_of(layer, gid, CellKind.POLYGON):
                inv.regions.add((rn, fname[uf.find(cid)]))
            for cid in ov.cells_of(layer, gid, CellKind.LINE):
                if cid in sub_edge:
                    inv.regions.add((rn, sub_edge[cid]))
            for cid in ov.cells_of(layer, gid, CellKind.NODE):
                if cid in vertex_of_node:
                    inv.regions.add((rn, vertex_of_node[cid]))
    return inv


def adjacent_regions(inv: TopologicalInvariant, region: str) -> set[str]:
    """Regions whose faces share an edge with a face of ``region``."""
    mine = inv.region_faces(region)
    edges = {e for f, e in inv.face_edge if f in mine}
    faces = {f for f, e in inv.face_edge if e in edges} - mine
    out = {r for r, c in inv.regions if c in faces and r != region}
    # a region only counts through its own faces
    return {r for r in out if inv.region_faces(r) & faces}


def count_adjacent(inv: TopologicalInvariant, region: str) -> int:
    return len(adjacent_regions(inv, region))


def _graph(inv: TopologicalInvariant) -> nx.DiGraph:
    g = nx.DiGraph()
    for v in inv.vertex:
        g.add_node(v, t="V")
    for e in inv.edge:
        g.add_node(e, t="E")
    for f in inv.face:
        g.add_node(f, t="F*" if f in inv.exterior_face else "F")
    for r in {r for r, _ in inv.regions}:
        g.add_node(("region", r), t="R:" + r.encode("ascii", "backslashreplace").decode())
    for r, c in inv.regions:
        g.add_edge(("region", r), c, t="in")
    for e, a, b in inv.endpoints:
        k = ("ends", e, a, b)
        g.add_node(k, t="ends")
        g.add_edge(k, e, t="edge")
        g.add_edge(k, a, t="end")
        g.add_edge(k, b, t="end")
    for f, e in inv.face_edge:
        g.add_edge(f, e, t="fe")
    for f, v in inv.face_vertex:
        g.add_edge(f, v, t="fv")
    for o, a, b, c, v in inv.between:
        k = ("btw", o, a, b, c, v)
        g.add_node(k, t="btw-ccw" if o == CCW else "btw-cw")
        g.add_edge(k, a, t="1")
        g.add_edge(k, b, t="2")
        g.add_edge(k, c, t="3")
        g.add_edge(k, v, t="at")
    return g


def _refine(nodes, adj, colour):
    """Colour refinement to a stable partition; colours are canonical ints."""
    n_classes = len(set(colour.values()))
    while True:
        sig = {
            x: (colour[x], tuple(sorted((lbl, d, colour[y]) for lbl, d, y in adj[x])))
            for x in nodes
        }
        rank = {s: i for i, s in enumerate(sorted(set(sig.values())))}
        colour = {x: rank[sig[x]] for x in nodes}
        k = len(rank)
        if k == n_classes:
            return colour
        n_classes = k


def invariant_equal_up_to_relabel(a: TopologicalInvariant, b: TopologicalInvariant) -> bool:
    """True iff some bijection of cell ids maps every relation of ``a`` onto ``b``.

    Individualization-refinement over the relation graph: refine colours on
    the disjoint union, split the smallest ambiguous class by fixing one node
    of ``a`` against each candidate in ``b``, and verify complete matchings.
    """
    sizes = lambda i: tuple(len(getattr(i, r)) for r in TopologicalInvariant.RELATIONS)
    if sizes(a) != sizes(b):
        return False
    ga, gb = _graph(a), _graph(b)
    nodes = [(0, x) for x in ga] + [(1, x) for x in gb]
    adj = {x: [] for x in nodes}
    for side, g in ((0, ga), (1, gb)):
        for u, v, d in g.edges(data=True):
            adj[(side, u)].append((d["t"], 1, (side, v)))
            adj[(side, v)].append((d["t"], 0, (side, u)))
    labels = sorted({d["t"] for g in (ga, gb) for _, d in g.nodes(data=True)})
    lid = {t: i for i, t in enumerate(labels)}
    colour = {(side, x): lid[g.nodes[x]["t"]] for side, g in ((0, ga), (1, gb)) for x in g}
    edges_b = {(u, v, d["t"]) for u, v, d in gb.edges(data=True)}

    def search(colour) -> bool:
        colour = _refine(nodes, adj, colour)
        classes: dict[int, tuple[list, list]] = defaultdict(lambda: ([], []))
        for (side, x), c in colour.items():
            classes[c][side].append(x)
        if any(len(xa) != len(xb) for xa, xb in classes.values()):
            return False
        open_ = [c for c, (xa, _) in classes.items() if len(xa) > 1]
        if not open_:
            m = {xa[0]: xb[0] for xa, xb in classes.values()}
            return all((m[u], m[v], d["t"]) in edges_b for u, v, d in ga.edges(data=True))
        c = min(open_, key=lambda k: (len(classes[k][0]), k))
        xa, xb = classes[c]
        fresh = max(colour.values()) + 1
        for y in xb:
            trial = dict(colour)
            trial[(0, xa[0])] = fresh
            trial[(1, y)] = fresh
            if search(trial):
                return True
        return False

    return search(colour)


def figure_fixture() -> list[Layer]:
    """A square city crossed by a straight river."""
    city = Layer("city")
    city.add(Polygon(0, [(0, 0), (4, 0), (4, 4), (0, 4)]))
    river = Layer("river")
    river.add(Polyline(0, [(-2, 2), (6, 2)]))
    return [city, river]


def figure_labels(inv: TopologicalInvariant) -> dict[str, str]:
    """Names used in the figure for the cells of :func:`figure_fixture`."""
    return {
        "1": inv.locate_edge((-1.0, 2.0)),
        "2": inv.locate_edge((2.0, 2.0)),
        "3": inv.locate_edge((5.0, 2.0)),
        "4": inv.locate_edge((0.0, 3.0)),
        "5": inv.locate_edge((0.0, 1.0)),
        "b": inv.locate_vertex((0.0, 2.0)),
        "c": inv.locate_vertex((4.0, 2.0)),
        "I": inv.locate_face((2.0, 3.0)),
    }


def transform_layers(layers: Iterable[Layer], fn) -> list[Layer]:
    return [l.transformed(fn) for l in layers]


def shear(k: float = 0.5, sx: float = 1.0, sy: float = 1.0, tx: float = 0.0, ty: float = 0.0):
    """Orientation-preserving affine map (x, y) -> (sx x + k y + tx, sy y + ty)."""
    if sx * sy <= 0:
        raise ValueError("orientation must be preserved")
    return lambda x, y: (sx * x + k * y + tx, sy * y + ty)
