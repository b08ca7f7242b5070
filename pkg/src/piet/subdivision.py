"""Line arrangements, common sub-polygonization and cell association.

The overlay of a set of layers is built per grid cell: the carrier lines of
the geometries meeting a grid cell, together with the four sides of the
grid cell, are arranged inside it, the resulting nodes, open segments and
open convex polygons become cells, and every cell is linked to the
original geometries it belongs to.
"""

from __future__ import annotations

import bisect
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .carrier import CarrierSet, carriers_of_layers
from .errors import ArrangementOverflowError, InvalidGeometryError
from .geom import (
    BBox,
    EpsilonConfig,
    Geometry,
    Line,
    Location,
    PointGeom,
    Polygon,
    Polyline,
    Point2,
    clip_line_to_box,
    geometry_meets_box,
    horizontal_line,
    intersection_area,
    is_similar_point,
    point_segment_distance,
    points_in_ring,
    ring_centroid,
    ring_signed_area,
    vertical_line,
)
from .layer import Layer, map_bbox

log = logging.getLogger(__name__)

DEFAULT_MAX_LINES = 10_000


class CellKind(str, Enum):
    NODE = "SubNode"
    LINE = "SubLine"
    POLYGON = "SubPolygon"

    @property
    def level(self) -> str:
        return {"SubNode": "Node", "SubLine": "OPl", "SubPolygon": "OPg"}[self.value]

    @property
    def table(self) -> str:
        return {"SubNode": "point", "SubLine": "linestring", "SubPolygon": "polygon"}[self.value]


GEOM_LEVEL = {"point": "Pt", "polyline": "Pl", "polygon": "Pg"}


@dataclass(frozen=True)
class GridSpec:
    rows: int = 1
    cols: int = 1

    def __post_init__(self):
        if not (isinstance(self.rows, int) and isinstance(self.cols, int)):
            raise ValueError("grid dimensions must be integers")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid {self.rows}x{self.cols} must be at least 1x1")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = text.lower().replace(" ", "").split("x")
        if len(parts) != 2:
            raise ValueError(f"grid must look like RxC, got {text!r}")
        try:
            return cls(int(parts[0]), int(parts[1]))
        except ValueError:
            raise ValueError(f"grid must look like RxC, got {text!r}") from None

    def __str__(self) -> str:
        return f"{self.rows}x{self.cols}"

    def xs(self, box: BBox) -> list[float]:
        return [box.xmin + box.width * i / self.cols for i in range(self.cols)] + [box.xmax]

    def ys(self, box: BBox) -> list[float]:
        return [box.ymin + box.height * i / self.rows for i in range(self.rows)] + [box.ymax]

    def rect(self, box: BBox, r: int, c: int) -> BBox:
        xs, ys = self.xs(box), self.ys(box)
        return BBox(xs[c], ys[r], xs[c + 1], ys[r + 1])

    def cells(self):
        for r in range(self.rows):
            for c in range(self.cols):
                yield (r, c)

    def locate(self, box: BBox, p: Sequence[float]) -> Optional[tuple[int, int]]:
        """Grid cell owning ``p`` under the half-open rule, or None outside."""
        if not box.contains_point(p):
            return None
        xs, ys = self.xs(box), self.ys(box)
        c = min(bisect.bisect_right(xs, p[0]) - 1, self.cols - 1)
        r = min(bisect.bisect_right(ys, p[1]) - 1, self.rows - 1)
        return (r, c)

    def span(self, box: BBox, bb: Sequence[float]) -> tuple[range, range]:
        """Rows and columns whose closed rectangles may meet the bbox ``bb``."""
        xs, ys = self.xs(box), self.ys(box)
        c0 = max(bisect.bisect_left(xs, bb[0]) - 1, 0)
        c1 = min(bisect.bisect_right(xs, bb[2]), self.cols)
        r0 = max(bisect.bisect_left(ys, bb[1]) - 1, 0)
        r1 = min(bisect.bisect_right(ys, bb[3]), self.rows)
        return range(r0, r1), range(c0, c1)


@dataclass(frozen=True)
class Cell:
    cell_id: int
    kind: CellKind
    coords: tuple[Point2, ...]
    grid_cell: tuple[int, int] = (0, 0)
    lines: tuple[int, ...] = ()
    edge_refs: tuple[int, ...] = ()
    node_refs: tuple[int, ...] = ()

    @property
    def rep(self) -> Point2:
        """A point in the relative interior of the cell."""
        if self.kind is CellKind.NODE:
            return self.coords[0]
        return ring_centroid(self.coords)

    @property
    def length(self) -> float:
        if self.kind is not CellKind.LINE:
            return 0.0
        p, q = self.coords
        return math.hypot(q.x - p.x, q.y - p.y)

    @property
    def area(self) -> float:
        if self.kind is not CellKind.POLYGON:
            return 0.0
        return abs(ring_signed_area(self.coords))

    def geometry_key(self) -> tuple:
        """Id-free identity used to compare cell sets."""
        if self.kind is CellKind.POLYGON:
            pts = sorted(self.coords)
        else:
            pts = sorted(self.coords)
        return (self.kind.value, tuple(pts))


@dataclass(frozen=True)
class Association:
    cell_id: int
    layer: str
    gid: int
    level: str


def level_pair(kind: CellKind, geom_kind: str) -> str:
    return f"{kind.level}->{GEOM_LEVEL[geom_kind]}"


# ---------------------------------------------------------------------------
# Cut points


def add_cut_point(
    p: Point2,
    pts: list[Point2],
    eps: float,
    key: Callable[[Sequence[float]], float] | None = None,
) -> list[Point2]:
    """Insert ``p`` into the ordered list ``pts`` unless a similar point is there.

    ``key`` orders the list; by default the distance to the origin. Along a
    single line any monotone parameter works. The list is updated in place
    and returned.
    """
    if key is None:
        key = _origin_distance
    k = key(p)
    i = bisect.bisect_left(pts, k, key=key)
    # similar points have keys within 2*eps for hypot and line parameters
    j = i - 1
    while j >= 0 and k - key(pts[j]) < 2 * eps:
        if is_similar_point(p, pts[j], eps):
            return pts
        j -= 1
    j = i
    while j < len(pts) and key(pts[j]) - k < 2 * eps:
        if is_similar_point(p, pts[j], eps):
            return pts
        j += 1
    pts.insert(i, p)
    return pts


def _origin_distance(p: Sequence[float]) -> float:
    return math.hypot(p[0], p[1])


# ---------------------------------------------------------------------------
# Arrangement of lines inside a box


@dataclass
class Arrangement:
    box: BBox
    lines: list[Line]
    vertices: list[Point2]
    vertex_lines: list[frozenset[int]]
    edges: list[tuple[int, int]]
    edge_lines: list[frozenset[int]]
    # bounded faces: boundary vertex ids and edge ids in CCW order, plus
    # the corner coordinates with collinear vertices removed
    face_vertices: list[tuple[int, ...]]
    face_edges: list[tuple[int, ...]]
    face_coords: list[tuple[Point2, ...]]

    def on_box(self, p: Sequence[float]) -> bool:
        b = self.box
        return p[0] == b.xmin or p[0] == b.xmax or p[1] == b.ymin or p[1] == b.ymax

    def edge_on_box(self, e: int) -> bool:
        u, v = self.edges[e]
        pu, pv = self.vertices[u], self.vertices[v]
        b = self.box
        return (
            (pu.x == pv.x and pu.x in (b.xmin, b.xmax))
            or (pu.y == pv.y and pu.y in (b.ymin, b.ymax))
        )

    def counts(self, interior_only: bool = True) -> tuple[int, int, int]:
        if not interior_only:
            return len(self.vertices), len(self.edges), len(self.face_coords)
        nv = sum(1 for p in self.vertices if not self.on_box(p))
        ne = sum(1 for e in range(len(self.edges)) if not self.edge_on_box(e))
        return nv, ne, len(self.face_coords)


class _Registry:
    """Vertex registry merging points similar under the box test."""

    def __init__(self, eps: float):
        self.eps = eps
        self.points: list[Point2] = []
        self.hash: dict[tuple[int, int], list[int]] = defaultdict(list)

    def _key(self, p):
        return (math.floor(p[0] / self.eps), math.floor(p[1] / self.eps))

    def add(self, p: Point2) -> int:
        kx, ky = self._key(p)
        best = None
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for vid in self.hash.get((kx + dx, ky + dy), ()):
                    if (best is None or vid < best) and is_similar_point(p, self.points[vid], self.eps):
                        best = vid
        if best is not None:
            return best
        vid = len(self.points)
        self.points.append(p)
        self.hash[(kx, ky)].append(vid)
        return vid


def _box_lines(box: BBox) -> list[Line]:
    return [
        horizontal_line(box.ymin),
        vertical_line(box.xmax),
        horizontal_line(box.ymax),
        vertical_line(box.xmin),
    ]


def _snap(x: float, lo: float, hi: float, eps: float) -> float:
    if abs(x - lo) < eps:
        return lo
    if abs(x - hi) < eps:
        return hi
    return x


def arrangement(
    lines: Sequence[Line],
    box: BBox,
    point_eps: float,
    line_eps: float = 1e-9,
    max_lines: int = DEFAULT_MAX_LINES,
    grid_cell: tuple[int, int] | None = None,
) -> tuple[Arrangement, list[int]]:
    """Arrange ``lines`` together with the sides of ``box``.

    Returns the arrangement and, for each of its lines, the index into
    ``lines`` (``-1`` for a box side not matched by any input line).
    Input lines missing the box are dropped.
    """
    if len(lines) > max_lines:
        raise ArrangementOverflowError(len(lines), max_lines, grid_cell)
    eps = point_eps
    sides = _box_lines(box)
    local: list[Line] = list(sides)
    origin: list[int] = [-1, -1, -1, -1]
    for i, ln in enumerate(lines):
        hit = None
        for s, side in enumerate(sides):
            if abs(ln.a - side.a) < line_eps and abs(ln.b - side.b) < line_eps and abs(ln.c - side.c) < line_eps:
                hit = s
                break
        if hit is not None:
            if origin[hit] == -1:
                origin[hit] = i
            continue
        if clip_line_to_box(ln, box) is None:
            continue
        local.append(ln)
        origin.append(i)

    n = len(local)
    reg = _Registry(eps)
    per_line: list[list[int]] = [[] for _ in range(n)]
    per_line_pts: list[list[Point2]] = [[] for _ in range(n)]

    A = np.array([[l.a, l.b, l.c] for l in local], dtype=float)
    a, b, c = A[:, 0], A[:, 1], A[:, 2]
    x0, x1, y0, y1 = box.xmin, box.xmax, box.ymin, box.ymax
    vertex_lines: dict[int, set[int]] = defaultdict(set)

    for i in range(n - 1):
        aj, bj, cj = a[i + 1 :], b[i + 1 :], c[i + 1 :]
        det = a[i] * bj - aj * b[i]
        ok = np.abs(det) >= 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = (b[i] * cj - bj * c[i]) / det
            ys = (aj * c[i] - a[i] * cj) / det
        ok &= (xs > x0 - eps) & (xs < x1 + eps) & (ys > y0 - eps) & (ys < y1 + eps)
        for k in np.nonzero(ok)[0]:
            j = i + 1 + int(k)
            x = _snap(float(xs[k]), x0, x1, eps)
            y = _snap(float(ys[k]), y0, y1, eps)
            x = min(max(x, x0), x1)
            y = min(max(y, y0), y1)
            vid = reg.add(Point2(x, y))
            vertex_lines[vid].update((i, j))

    verts = reg.points
    # per-line ordered cut lists
    for vid in range(len(verts)):
        for i in vertex_lines[vid]:
            per_line[i].append(vid)
    edges_idx: dict[tuple[int, int], int] = {}
    edges: list[tuple[int, int]] = []
    edge_lines: list[set[int]] = []
    for i in range(n):
        ln = local[i]
        ordered: list[Point2] = []
        to_vid: dict[Point2, int] = {}
        for vid in sorted(per_line[i]):
            p = verts[vid]
            before = len(ordered)
            add_cut_point(p, ordered, eps, key=ln.param)
            if len(ordered) > before:
                to_vid[p] = vid
        chain = [to_vid[p] for p in ordered]
        per_line_pts[i] = ordered
        for u, v in zip(chain, chain[1:]):
            k = (u, v) if u < v else (v, u)
            e = edges_idx.get(k)
            if e is None:
                e = len(edges)
                edges_idx[k] = e
                edges.append(k)
                edge_lines.append(set())
            edge_lines[e].add(i)

    # angular order of neighbours around each vertex
    nbrs: list[list[tuple[float, int, int]]] = [[] for _ in verts]
    for e, (u, v) in enumerate(edges):
        pu, pv = verts[u], verts[v]
        nbrs[u].append((math.atan2(pv.y - pu.y, pv.x - pu.x), v, e))
        nbrs[v].append((math.atan2(pu.y - pv.y, pu.x - pv.x), u, e))
    pos: dict[tuple[int, int], int] = {}
    for v in range(len(verts)):
        nbrs[v].sort()
        for idx, (_, w, _) in enumerate(nbrs[v]):
            pos[(v, w)] = idx

    seen: set[tuple[int, int]] = set()
    face_vertices, face_edges, face_coords = [], [], []
    for e, (u0, v0) in enumerate(edges):
        for start in ((u0, v0), (v0, u0)):
            if start in seen:
                continue
            fv, fe = [], []
            u, v = start
            guard = 0
            while True:
                seen.add((u, v))
                fv.append(u)
                fe.append(edges_idx[(u, v) if u < v else (v, u)])
                lst = nbrs[v]
                idx = pos[(v, u)]
                w = lst[(idx - 1) % len(lst)][1]
                u, v = v, w
                guard += 1
                if (u, v) == start or guard > 4 * len(edges) + 4:
                    break
            coords = [verts[k] for k in fv]
            if ring_signed_area(coords) <= 0:
                continue
            face_vertices.append(tuple(fv))
            face_edges.append(tuple(fe))
            face_coords.append(_strip_collinear(coords, eps))

    arr = Arrangement(
        box=box,
        lines=local,
        vertices=list(verts),
        vertex_lines=[frozenset(vertex_lines[v]) for v in range(len(verts))],
        edges=edges,
        edge_lines=[frozenset(s) for s in edge_lines],
        face_vertices=face_vertices,
        face_edges=face_edges,
        face_coords=face_coords,
    )
    return arr, origin


def _strip_collinear(coords: list[Point2], eps: float) -> tuple[Point2, ...]:
    pts = list(coords)
    changed = True
    while changed and len(pts) > 3:
        changed = False
        for k in range(len(pts)):
            prev, cur, nxt = pts[k - 1], pts[k], pts[(k + 1) % len(pts)]
            if point_segment_distance(cur, prev, nxt) < eps:
                pts.pop(k)
                changed = True
                break
    return tuple(pts)


def _as_lines(lines: CarrierSet | Iterable[Line]) -> list[Line]:
    if isinstance(lines, CarrierSet):
        return list(lines.lines)
    return list(lines)


def arrange(
    lines: CarrierSet | Iterable[Line],
    box: BBox,
    eps: EpsilonConfig | None = None,
    max_lines: int = DEFAULT_MAX_LINES,
) -> list[Cell]:
    """Cells of the subdivision induced by ``lines`` strictly inside ``box``."""
    eps = eps or EpsilonConfig.for_box(box)
    arr, origin = arrangement(_as_lines(lines), box, eps.point_eps, eps.line_eps, max_lines)
    feats = _local_features(arr, origin)
    cells = []
    for kind, coords, lns, _, _, on_box in feats:
        if on_box:
            continue
        cells.append(Cell(len(cells), kind, coords, (0, 0), lns))
    return cells


def _local_features(arr: Arrangement, origin: list[int]):
    """All features of an arrangement as (kind, coords, lines, edge ids,
    vertex ids, on_box) in deterministic order: nodes, segments, faces."""
    out = []

    def glines(loc: Iterable[int]) -> tuple[int, ...]:
        return tuple(sorted({origin[i] for i in loc if origin[i] >= 0}))

    order_v = sorted(range(len(arr.vertices)), key=lambda v: arr.vertices[v])
    for v in order_v:
        p = arr.vertices[v]
        out.append((CellKind.NODE, (p,), glines(arr.vertex_lines[v]), (), (v,), arr.on_box(p)))

    def mid(e):
        u, v = arr.edges[e]
        pu, pv = arr.vertices[u], arr.vertices[v]
        return ((pu.x + pv.x) / 2, (pu.y + pv.y) / 2)

    order_e = sorted(range(len(arr.edges)), key=lambda e: (mid(e), sorted(arr.vertices[k] for k in arr.edges[e])))
    for e in order_e:
        u, v = arr.edges[e]
        pu, pv = arr.vertices[u], arr.vertices[v]
        if pv < pu:
            pu, pv = pv, pu
            u, v = v, u
        out.append((CellKind.LINE, (pu, pv), glines(arr.edge_lines[e]), (e,), (u, v), arr.edge_on_box(e)))

    order_f = sorted(range(len(arr.face_coords)), key=lambda f: ring_centroid(arr.face_coords[f]))
    for f in order_f:
        lns: set[int] = set()
        for e in arr.face_edges[f]:
            lns |= arr.edge_lines[e]
        out.append(
            (CellKind.POLYGON, arr.face_coords[f], glines(lns), arr.face_edges[f], arr.face_vertices[f], False)
        )
    return out


# ---------------------------------------------------------------------------
# Association


def overlapping_polygons(p1, p2, area_eps: float) -> bool:
    """True iff the two polygons share more than ``area_eps`` of area."""
    r1 = p1.vertices if isinstance(p1, Polygon) else p1
    r2 = p2.vertices if isinstance(p2, Polygon) else p2
    return intersection_area(r1, r2) > area_eps


def _points_polyline_distance(xs: np.ndarray, ys: np.ndarray, coords: Sequence[Point2]) -> np.ndarray:
    r = np.asarray(coords, dtype=float)
    x0, y0 = r[:-1, 0], r[:-1, 1]
    dx, dy = r[1:, 0] - x0, r[1:, 1] - y0
    L2 = dx * dx + dy * dy
    px, py = xs[:, None], ys[:, None]
    t = np.clip(((px - x0) * dx + (py - y0) * dy) / L2, 0.0, 1.0)
    return np.hypot(px - (x0 + t * dx), py - (y0 + t * dy)).min(axis=1)


def _associate_features(
    feats: Sequence[tuple[CellKind, tuple[Point2, ...]]],
    candidates: Sequence[tuple[str, Geometry]],
    eps: EpsilonConfig,
) -> list[tuple[int, str, int, str]]:
    """Associations of local features to candidate geometries.

    Returns ``(feature index, layer, gid, level pair)`` tuples.
    """
    out = []
    if not feats:
        return out
    kinds = np.array([0 if k is CellKind.NODE else 1 if k is CellKind.LINE else 2 for k, _ in feats])
    reps = np.array(
        [c[0] if k is CellKind.NODE else ring_centroid(c) for k, c in feats], dtype=float
    )
    xs, ys = reps[:, 0], reps[:, 1]
    pe = eps.point_eps
    for layer, g in candidates:
        bx0, by0, bx1, by1 = g.bbox()
        near = np.nonzero((xs > bx0 - pe) & (xs < bx1 + pe) & (ys > by0 - pe) & (ys < by1 + pe))[0]
        if not len(near):
            continue
        if isinstance(g, PointGeom):
            sel = near[kinds[near] == 0]
            hit = sel[(np.abs(xs[sel] - g.p.x) < pe) & (np.abs(ys[sel] - g.p.y) < pe)]
            out.extend((int(i), layer, g.gid, level_pair(CellKind.NODE, "point")) for i in hit)
        elif isinstance(g, Polyline):
            sel = near[kinds[near] <= 1]
            if not len(sel):
                continue
            d = _points_polyline_distance(xs[sel], ys[sel], g.vertices)
            for i in sel[d < pe]:
                out.append((int(i), layer, g.gid, level_pair(feats[i][0], "polyline")))
        else:
            loc = points_in_ring(xs[near], ys[near], g.vertices, pe)
            for i, l in zip(near, loc):
                k = feats[i][0]
                if l == 1 or (l == 0 and k is not CellKind.POLYGON):
                    out.append((int(i), layer, g.gid, level_pair(k, "polygon")))
                elif l == 0 and overlapping_polygons(feats[i][1], g.vertices, eps.area_eps):
                    out.append((int(i), layer, g.gid, level_pair(k, "polygon")))
    out.sort(key=lambda t: (t[0], t[1], t[2]))
    return out


def associate(
    cells: Sequence[Cell],
    layers: Sequence[Layer],
    eps: EpsilonConfig | None = None,
) -> list[Association]:
    """Link every cell to the original geometries it belongs to.

    Points: nodes similar to them. Polylines: nodes and segments lying on
    them. Polygons: nodes, segments and faces inside or on the boundary
    (faces only when they overlap by more than ``area_eps``).
    """
    if eps is None:
        eps = EpsilonConfig.for_box(map_bbox(layers))
    feats = [(c.kind, c.coords) for c in cells]
    cands = [(l.name, g) for l in layers for g in l]
    raw = _associate_features(feats, cands, eps)
    orphans = len(cells) - len({i for i, *_ in raw})
    if orphans:
        log.debug("%d cells belong to no layer", orphans)
    return [Association(cells[i].cell_id, layer, gid, lvl) for i, layer, gid, lvl in raw]


# ---------------------------------------------------------------------------
# Grid build


@dataclass(frozen=True)
class GridCellStats:
    grid_cell: tuple[int, int]
    lines: int
    points: int
    segments: int
    polygons: int


def _owns(p: Sequence[float], rect: BBox, last_col: bool, last_row: bool) -> bool:
    okx = rect.xmin <= p[0] < rect.xmax or (last_col and p[0] == rect.xmax)
    oky = rect.ymin <= p[1] < rect.ymax or (last_row and p[1] == rect.ymax)
    return okx and oky


def _build_grid_cell(args):
    (rc, rect, lines, line_ids, candidates, eps, max_lines, last_col, last_row) = args
    arr, origin = arrangement(lines, rect, eps.point_eps, eps.line_eps, max_lines, rc)
    gorigin = [line_ids[i] if i >= 0 else -1 for i in origin]
    feats = _local_features(arr, gorigin)
    stats = GridCellStats(rc, len(arr.lines), len(arr.vertices), len(arr.edges), len(arr.face_coords))
    owned = []
    for f in feats:
        kind, coords = f[0], f[1]
        if not f[5]:
            owned.append(f)
            continue
        rep = coords[0] if kind is CellKind.NODE else ring_centroid(coords)
        if _owns(rep, rect, last_col, last_row):
            owned.append(f)
    assoc = _associate_features([(f[0], f[1]) for f in owned], candidates, eps)
    return rc, owned, assoc, stats


@dataclass
class Overlay:
    """The precomputed common sub-polygonization of a layer combination."""

    layers: dict[str, Layer]
    box: BBox
    grid: GridSpec
    eps: EpsilonConfig
    carriers: CarrierSet
    cells: list[Cell]
    associations: list[Association]
    stats: dict[tuple[int, int], GridCellStats] = field(default_factory=dict)
    _index: dict | None = field(default=None, repr=False, compare=False)

    @property
    def combo(self) -> str:
        return combo_id(self.layers)

    def _build_index(self):
        cell_gids: dict[CellKind, dict[int, list[tuple[str, int]]]] = {k: defaultdict(list) for k in CellKind}
        gid_cells: dict[tuple[str, int], dict[CellKind, set[int]]] = defaultdict(lambda: {k: set() for k in CellKind})
        for a in self.associations:
            k = self.cells[a.cell_id].kind
            cell_gids[k][a.cell_id].append((a.layer, a.gid))
            gid_cells[(a.layer, a.gid)][k].add(a.cell_id)
        by_grid: dict[tuple[int, int], list[int]] = defaultdict(list)
        for c in self.cells:
            by_grid[c.grid_cell].append(c.cell_id)
        self._index = {
            "cell_gids": {k: dict(v) for k, v in cell_gids.items()},
            "gid_cells": {g: {k: frozenset(s) for k, s in d.items()} for g, d in gid_cells.items()},
            "by_grid": dict(by_grid),
        }

    @property
    def index(self) -> dict:
        if self._index is None:
            self._build_index()
        return self._index

    def cells_of(self, layer: str, gid: int, kind: CellKind | None = None) -> frozenset[int]:
        d = self.index["gid_cells"].get((layer, gid))
        if d is None:
            return frozenset()
        if kind is None:
            return frozenset().union(*d.values())
        return d[kind]

    def owners(self, cell_id: int, layer: str | None = None) -> list[tuple[str, int]]:
        kind = self.cells[cell_id].kind
        pairs = self.index["cell_gids"][kind].get(cell_id, [])
        if layer is None:
            return pairs
        return [p for p in pairs if p[0] == layer]

    def grid_cells(self, rc: tuple[int, int]) -> list[int]:
        return self.index["by_grid"].get(rc, [])

    def orphans(self) -> list[int]:
        has = set()
        for d in self.index["cell_gids"].values():
            has.update(d)
        return [c.cell_id for c in self.cells if c.cell_id not in has]

    def ext(self, layer: str, gid: int) -> frozenset[int]:
        """All cells (of every kind) making up a geometry."""
        return self.cells_of(layer, gid)


def combo_id(layers: Iterable[str] | Mapping[str, object]) -> str:
    return "+".join(sorted(layers))


def _grid_tasks(layers, box, grid, eps, carriers, max_lines):
    by_source = carriers.by_source()
    cand: dict[tuple[int, int], list[tuple[str, Geometry]]] = defaultdict(list)
    for layer in sorted(layers, key=lambda l: l.name):
        for gid in sorted(layer.geometries):
            g = layer.geometries[gid]
            rows, cols = grid.span(box, g.bbox())
            for r in rows:
                for c in cols:
                    if geometry_meets_box(g, grid.rect(box, r, c)):
                        cand[(r, c)].append((layer.name, g))
    for rc in grid.cells():
        r, c = rc
        rect = grid.rect(box, r, c)
        ids = sorted({i for name, g in cand[rc] for i in by_source.get((name, g.gid), ())})
        if len(ids) > max_lines:
            raise ArrangementOverflowError(len(ids), max_lines, rc)
        yield (
            rc,
            rect,
            [carriers.lines[i] for i in ids],
            ids,
            cand[rc],
            eps,
            max_lines,
            c == grid.cols - 1,
            r == grid.rows - 1,
        )


def build_overlay(
    layers: Sequence[Layer],
    box: BBox | None = None,
    grid: GridSpec | None = None,
    eps: EpsilonConfig | None = None,
    max_lines: int = DEFAULT_MAX_LINES,
    n_jobs: int = 1,
) -> Overlay:
    """Common sub-polygonization of ``layers`` computed per grid cell."""
    layers = list(layers)
    names = [l.name for l in layers]
    if len(set(names)) != len(names):
        raise InvalidGeometryError(f"duplicate layer names {names}")
    box = box or map_bbox(layers)
    grid = grid or GridSpec(1, 1)
    eps = eps or EpsilonConfig.for_box(box)
    for l in layers:
        for g in l:
            if isinstance(g, Polyline):
                g.validate(eps.point_eps)
            x0, y0, x1, y1 = g.bbox()
            if x0 < box.xmin or y0 < box.ymin or x1 > box.xmax or y1 > box.ymax:
                raise InvalidGeometryError(f"{l.name}.{g.gid} reaches outside the build box {box}")
    carriers = carriers_of_layers(layers, eps.line_eps)
    tasks = _grid_tasks(layers, box, grid, eps, carriers, max_lines)
    if n_jobs and n_jobs > 1 and grid.rows * grid.cols > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_build_grid_cell, tasks, chunksize=8))
    else:
        results = [_build_grid_cell(t) for t in tasks]

    cells: list[Cell] = []
    assocs: list[Association] = []
    stats = {}
    for rc, owned, assoc, st in results:
        stats[rc] = st
        base = len(cells)
        vmap: dict[int, int] = {}
        emap: dict[int, int] = {}
        for k, f in enumerate(owned):
            if f[0] is CellKind.NODE:
                vmap[f[4][0]] = base + k
            elif f[0] is CellKind.LINE:
                emap[f[3][0]] = base + k
        for k, (kind, coords, lns, eids, vids, _) in enumerate(owned):
            if kind is CellKind.NODE:
                cells.append(Cell(base + k, kind, coords, rc, lns))
            else:
                cells.append(
                    Cell(
                        base + k,
                        kind,
                        coords,
                        rc,
                        lns,
                        edge_refs=tuple(emap.get(e, -1) for e in eids) if kind is CellKind.POLYGON else (),
                        node_refs=tuple(vmap.get(v, -1) for v in vids),
                    )
                )
        for i, layer, gid, lvl in assoc:
            assocs.append(Association(base + i, layer, gid, lvl))
    return Overlay({l.name: l for l in layers}, box, grid, eps, carriers, cells, assocs, stats)


def grid_csp(
    layers: Sequence[Layer],
    box: BBox | None = None,
    grid: GridSpec | None = None,
    eps: EpsilonConfig | None = None,
    max_lines: int = DEFAULT_MAX_LINES,
    n_jobs: int = 1,
) -> list[Cell]:
    return build_overlay(layers, box, grid, eps, max_lines, n_jobs).cells


def csp(
    layers: Sequence[Layer],
    box: BBox | None = None,
    eps: EpsilonConfig | None = None,
    max_lines: int = DEFAULT_MAX_LINES,
) -> list[Cell]:
    """Cells strictly inside ``box`` of the arrangement of all carriers."""
    layers = list(layers)
    box = box or map_bbox(layers)
    eps = eps or EpsilonConfig.for_box(box)
    return arrange(carriers_of_layers(layers, eps.line_eps), box, eps, max_lines)


# ---------------------------------------------------------------------------
# Measures


class MeasureSemantics(str, Enum):
    COPY = "copy"
    AREA = "area"
    LENGTH = "length"


@dataclass(frozen=True)
class CellMeasure:
    cell_id: int
    layer: str
    gid: int
    measure: str
    value: float


def propagate_measures(
    cells: Sequence[Cell] | Overlay,
    assocs: Iterable[Association],
    facts,
    semantics: Mapping[tuple[str, str], MeasureSemantics | str] | None = None,
) -> list[CellMeasure]:
    """Distribute per-geometry measures over the associated cells.

    ``facts`` is an iterable of fact tables exposing ``layer`` and ``rows``
    (gid -> {measure: value}). ``semantics`` maps (layer, measure) to copy
    (the default), area or length weighting. Geometries without a fact row
    contribute nothing.
    """
    if isinstance(cells, Overlay):
        layers = cells.layers
        cells = cells.cells
    else:
        layers = None
    semantics = {k: MeasureSemantics(v) for k, v in (semantics or {}).items()}
    by_layer = {}
    for t in facts:
        by_layer.setdefault(t.layer, {}).update(t.rows)
    cell_by_id = {c.cell_id: c for c in cells}
    out = []
    parent_size: dict[tuple[str, int, str], float] = {}
    assocs = list(assocs)
    for a in assocs:
        rows = by_layer.get(a.layer)
        if not rows or a.gid not in rows:
            continue
        cell = cell_by_id[a.cell_id]
        for m, v in rows[a.gid].items():
            sem = semantics.get((a.layer, m), MeasureSemantics.COPY)
            if v is None or not isinstance(v, (int, float)):
                continue
            if sem is MeasureSemantics.COPY:
                out.append(CellMeasure(a.cell_id, a.layer, a.gid, m, v))
                continue
            if sem is MeasureSemantics.AREA:
                part = cell.area
                key = (a.layer, a.gid, "area")
            else:
                part = cell.length
                key = (a.layer, a.gid, "length")
            if key not in parent_size:
                g = layers[a.layer][a.gid] if layers else None
                if g is not None:
                    parent_size[key] = g.area if sem is MeasureSemantics.AREA else g.length
                else:
                    parent_size[key] = sum(
                        (cell_by_id[b.cell_id].area if sem is MeasureSemantics.AREA else cell_by_id[b.cell_id].length)
                        for b in assocs
                        if b.layer == a.layer and b.gid == a.gid
                    )
            total = parent_size[key]
            if total <= 0 or part <= 0:
                continue
            out.append(CellMeasure(a.cell_id, a.layer, a.gid, m, v * part / total))
    return out
