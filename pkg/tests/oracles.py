"""Independent reference implementations used by the tests.

Everything here is built on shapely and exact rational arithmetic, never
on the package's own geometry code, so a shared bug cannot hide.
"""

from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction

from shapely.geometry import LineString, Point, box as sbox
from shapely.geometry import Polygon as SPolygon
from shapely.ops import polygonize, unary_union

from piet.geom import PointGeom, Polygon, Polyline
from piet.layer import Layer

# ---------------------------------------------------------------------------
# random maps


def rand_poly(rng: random.Random, gid: int, integer: bool) -> Polygon:
    while True:
        n = rng.randint(3, 5)
        cx, cy = rng.uniform(1, 9), rng.uniform(1, 9)
        angs = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
        rad = [rng.uniform(0.5, 3) for _ in range(n)]
        pts = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a, r in zip(angs, rad)]
        if integer:
            pts = [(round(x), round(y)) for x, y in pts]
        try:
            return Polygon(gid, pts)
        except Exception:
            continue


def rand_map(seed: int, integer: bool | None = None, max_per_layer: int = 6) -> list[Layer]:
    """2 to 4 layers: points, polylines, then one or two polygon layers.

    Integer maps put every vertex on the unit lattice, which produces
    plenty of shared edges, touching corners and collinear overlaps.
    """
    rng = random.Random(seed)
    if integer is None:
        integer = seed % 2 == 0
    kinds = ["point", "polyline", "polygon", "polygon"][: rng.randint(2, 4)]
    layers = []
    for li, kind in enumerate(kinds):
        lay = Layer(f"L{li}")
        for gid in range(rng.randint(1, max_per_layer)):
            while True:
                try:
                    if kind == "point":
                        x, y = rng.uniform(0, 10), rng.uniform(0, 10)
                        if integer:
                            x, y = round(x), round(y)
                        g = PointGeom(gid, (x, y))
                    elif kind == "polyline":
                        pts = [(rng.uniform(0, 10), rng.uniform(0, 10)) for _ in range(rng.randint(2, 4))]
                        if integer:
                            pts = [(round(x), round(y)) for x, y in pts]
                        g = Polyline(gid, pts)
                        g.validate(1e-6)
                    else:
                        g = rand_poly(rng, gid, integer)
                    break
                except Exception:
                    pass
            lay.add(g, {"v": rng.randint(-50, 100), "w": rng.uniform(0, 10)})
        layers.append(lay)
    return layers


# ---------------------------------------------------------------------------
# geometric join


def shape(g):
    if g.kind == "point":
        return Point(g.p)
    if g.kind == "polyline":
        return LineString(g.coords())
    return SPolygon(g.coords())


TOL = 1e-9


def intersects_at(a, b, sublevel: str) -> bool:
    """Point: any contact; LineString: a common 1-d piece; Polygon: common area."""
    sa, sb = shape(a), shape(b)
    if sa.distance(sb) > TOL:
        return False
    if sublevel == "Point":
        return True
    inter = sa.intersection(sb)
    if sublevel == "LineString":
        return inter.length > TOL
    return inter.area > TOL


def covers(a, b) -> bool:
    """Every point of ``b`` lies in ``a``, boundary included."""
    sa, sb = shape(a), shape(b)
    if sb.geom_type == "Point" or a.kind == "polygon":
        return sa.buffer(TOL).covers(sb)
    return sb.difference(sa.buffer(TOL)).length <= TOL


def join(la: Layer, lb: Layer, pred) -> set[tuple[int, int]]:
    return {(a.gid, b.gid) for a in la for b in lb if pred(a, b)}


# ---------------------------------------------------------------------------
# line arrangements


def rand_lines(rng: random.Random, n: int, span: int = 10) -> list[tuple[int, int, int]]:
    """Distinct integer lines through lattice points of [0, span]^2."""
    seen, out = set(), []
    while len(out) < n:
        p = (rng.randint(0, span), rng.randint(0, span))
        q = (rng.randint(0, span), rng.randint(0, span))
        if p == q:
            continue
        a, b, c = q[1] - p[1], p[0] - q[0], q[0] * p[1] - p[0] * q[1]
        g = math.gcd(math.gcd(abs(a), abs(b)), abs(c)) or 1
        a, b, c = a // g, b // g, c // g
        if b < 0 or (b == 0 and a < 0):
            a, b, c = -a, -b, -c
        if (a, b, c) not in seen:
            seen.add((a, b, c))
            out.append((a, b, c))
    return out


def arrangement_counts(lines, box) -> tuple[int, int, int]:
    """(vertices, edges, faces) strictly inside ``box`` by brute force.

    Vertices are pairwise intersections in exact rationals. An edge count
    is k + 1 for a line crossing the open box with k vertices on it. Faces
    come from shapely's polygonize over the clipped lines and the box
    outline; slivers below 1e-9 are float noise at multiple points.
    """
    x0, y0, x1, y1 = (Fraction(v) for v in box)
    lines = [tuple(Fraction(v) for v in l) for l in lines]
    on = {i: set() for i in range(len(lines))}
    verts = set()
    for i, j in itertools.combinations(range(len(lines)), 2):
        a1, b1, c1 = lines[i]
        a2, b2, c2 = lines[j]
        d = a1 * b2 - a2 * b1
        if d == 0:
            continue
        x, y = (b1 * c2 - b2 * c1) / d, (a2 * c1 - a1 * c2) / d
        if x0 < x < x1 and y0 < y < y1:
            verts.add((x, y))
            on[i].add((x, y))
            on[j].add((x, y))
    outline = sbox(*map(float, box))
    segs, edges = [], 0
    for i, (a, b, c) in enumerate(lines):
        a, b, c = float(a), float(b), float(c)
        lo, hi = float(x0) - 1, float(x1) + 1
        if b != 0:
            pts = [(lo, (-c - a * lo) / b), (hi, (-c - a * hi) / b)]
        else:
            pts = [(-c / a, float(y0) - 1), (-c / a, float(y1) + 1)]
        seg = LineString(pts).intersection(outline)
        if seg.is_empty or seg.length == 0:
            continue
        m = seg.interpolate(0.5, normalized=True)
        if not (x0 < m.x < x1 and y0 < m.y < y1):
            continue
        edges += len(on[i]) + 1
        segs.append(seg)
    faces = [f for f in polygonize(unary_union(segs + [outline.exterior])) if f.area > 1e-9]
    return len(verts), edges, len(faces)


# ---------------------------------------------------------------------------
# map graph counts


def map_counts(layers) -> tuple[int, int, int]:
    """(V, E, F) of the map drawn by polygon rings and polylines.

    The linework is noded by shapely; vertices of degree two are dissolved
    (one is kept on each closed loop) and F counts bounded faces plus the
    exterior. Point layers are not handled.
    """
    import networkx as nx

    lines = []
    for lay in layers:
        for g in lay:
            s = shape(g)
            lines.append(s.exterior if g.kind == "polygon" else s)
    noded = unary_union(lines)
    parts = list(getattr(noded, "geoms", [noded]))
    graph = nx.MultiGraph()
    for ls in parts:
        cs = list(ls.coords)
        for a, b in zip(cs, cs[1:]):
            graph.add_edge(a, b)
    v_raw, e_raw = graph.number_of_nodes(), graph.number_of_edges()
    keep = {n for n in graph if graph.degree(n) != 2}
    for comp in nx.connected_components(graph):
        if not comp & keep:
            keep.add(min(comp))
    v = len(keep)
    e = e_raw - (v_raw - v)
    f = sum(1 for p in polygonize(parts) if p.area > 1e-9) + 1
    return v, e, f
