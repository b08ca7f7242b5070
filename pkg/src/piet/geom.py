"""Planar geometry kernel.

Points, lines in normalized implicit form, segments, polylines, simple
polygons and axis-aligned boxes, together with the tolerance-aware
predicates the overlay builder and the query engine are written against.
All distances are in map units; the kernel never assumes a projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateGeometryError, InvalidGeometryError

# |a1*b2 - a2*b1| below this means parallel lines.
PARALLEL_TOL = 1e-12
# Below this magnitude the `b` coefficient is treated as zero when fixing
# the sign of a line, so nearly vertical lines get a stable representation.
SIGN_TOL = 1e-12


class Point2(NamedTuple):
    x: float
    y: float


def point(x: float, y: float) -> Point2:
    """Build a validated point (finite coordinates only)."""
    x = float(x)
    y = float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidGeometryError(f"non-finite coordinate ({x}, {y})")
    return Point2(x, y)


class Segment(NamedTuple):
    p: Point2
    q: Point2

    @property
    def length(self) -> float:
        return math.hypot(self.q.x - self.p.x, self.q.y - self.p.y)

    @property
    def midpoint(self) -> Point2:
        return Point2((self.p.x + self.q.x) / 2.0, (self.p.y + self.q.y) / 2.0)


class Location(Enum):
    INSIDE = 1
    ON_BOUNDARY = 0
    OUTSIDE = -1


@dataclass(frozen=True)
class BBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidGeometryError(f"non-finite box {vals}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise InvalidGeometryError(f"empty box {vals}")

    @classmethod
    def of_points(cls, pts: Iterable[Sequence[float]], margin: float = 0.0) -> "BBox":
        xs, ys = [], []
        for p in pts:
            xs.append(p[0])
            ys.append(p[1])
        if not xs:
            raise InvalidGeometryError("cannot bound an empty point set")
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
        w = max(x1 - x0, y1 - y0, 1.0)
        pad = margin * w if margin > 0 else 0.0
        if x0 == x1:
            x0, x1 = x0 - max(pad, 0.5), x1 + max(pad, 0.5)
        else:
            x0, x1 = x0 - pad, x1 + pad
        if y0 == y1:
            y0, y1 = y0 - max(pad, 0.5), y1 + max(pad, 0.5)
        else:
            y0, y1 = y0 - pad, y1 + pad
        return cls(x0, y0, x1, y1)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def corners(self) -> tuple[Point2, Point2, Point2, Point2]:
        """Corners in counter-clockwise order starting at (xmin, ymin)."""
        return (
            Point2(self.xmin, self.ymin),
            Point2(self.xmax, self.ymin),
            Point2(self.xmax, self.ymax),
            Point2(self.xmin, self.ymax),
        )

    def contains_point(self, p: Sequence[float]) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    def strictly_contains(self, p: Sequence[float]) -> bool:
        return self.xmin < p[0] < self.xmax and self.ymin < p[1] < self.ymax

    def intersects(self, other: "BBox") -> bool:
        return not (
            other.xmin > self.xmax
            or other.xmax < self.xmin
            or other.ymin > self.ymax
            or other.ymax < self.ymin
        )

    def contains_box(self, other: "BBox") -> bool:
        return (
            self.xmin <= other.xmin
            and other.xmax <= self.xmax
            and self.ymin <= other.ymin
            and other.ymax <= self.ymax
        )

    def ring(self) -> tuple[Point2, ...]:
        return self.corners()


@dataclass(frozen=True)
class EpsilonConfig:
    """Tolerances used by the builder; all strictly positive."""

    point_eps: float = 1e-9
    area_eps: float = 1e-12
    line_eps: float = 1e-9

    def __post_init__(self):
        for name in ("point_eps", "area_eps", "line_eps"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")

    @classmethod
    def for_box(cls, box: BBox, line_eps: float = 1e-9) -> "EpsilonConfig":
        return cls(point_eps=1e-9 * box.diagonal, area_eps=1e-12 * box.area, line_eps=line_eps)

    def as_dict(self) -> dict:
        return {"point_eps": self.point_eps, "area_eps": self.area_eps, "line_eps": self.line_eps}


# ---------------------------------------------------------------------------
# Lines


@dataclass(frozen=True, order=True)
class Line:
    """The line a*x + b*y + c = 0 with a^2 + b^2 = 1 and a fixed sign."""

    a: float
    b: float
    c: float

    @classmethod
    def from_coeffs(cls, a: float, b: float, c: float) -> "Line":
        n = math.hypot(a, b)
        if n == 0.0 or not math.isfinite(n):
            raise DegenerateGeometryError(f"({a}, {b}) is not a line normal")
        a, b, c = a / n, b / n, c / n
        if abs(b) > SIGN_TOL:
            if b < 0:
                a, b, c = -a, -b, -c
        elif a < 0:
            a, b, c = -a, -b, -c
        # normalize -0.0 so equal lines compare and hash equal
        return cls(a + 0.0, b + 0.0, c + 0.0)

    def canonical(self) -> "Line":
        return Line.from_coeffs(self.a, self.b, self.c)

    def value(self, p: Sequence[float]) -> float:
        """Signed distance of ``p`` from the line."""
        return self.a * p[0] + self.b * p[1] + self.c

    @property
    def direction(self) -> Point2:
        return Point2(-self.b, self.a)

    @property
    def foot(self) -> Point2:
        """Foot of the perpendicular dropped from the origin."""
        return Point2(-self.a * self.c, -self.b * self.c)

    def param(self, p: Sequence[float]) -> float:
        """Signed position of ``p`` along the line, measured from the foot."""
        return -self.b * p[0] + self.a * p[1]

    def at(self, t: float) -> Point2:
        f = self.foot
        return Point2(f.x - self.b * t, f.y + self.a * t)

    def contains(self, p: Sequence[float], eps: float) -> bool:
        return abs(self.value(p)) < eps

    def key(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)


def is_similar_point(p1: Sequence[float], p2: Sequence[float], eps: float) -> bool:
    """Box similarity test with strict bounds on both axes (not Euclidean)."""
    dx = p1[0] - p2[0]
    dy = p1[1] - p2[1]
    return -eps < dx < eps and -eps < dy < eps


def line_through(p: Sequence[float], q: Sequence[float], eps: float = 0.0) -> Line:
    """Line through two points.

    The pair is sorted first, so ``line_through(p, q)`` and
    ``line_through(q, p)`` are bit-identical.
    """
    p = Point2(float(p[0]), float(p[1]))
    q = Point2(float(q[0]), float(q[1]))
    if p == q or (eps > 0 and is_similar_point(p, q, eps)):
        raise DegenerateGeometryError(f"points {tuple(p)} and {tuple(q)} do not define a line")
    if q < p:
        p, q = q, p
    dx = q.x - p.x
    dy = q.y - p.y
    a, b = dy, -dx
    n = math.hypot(a, b)
    a, b = a / n, b / n
    return Line.from_coeffs(a, b, -(a * p.x + b * p.y))


def horizontal_line(y: float) -> Line:
    return Line.from_coeffs(0.0, 1.0, -float(y))


def vertical_line(x: float) -> Line:
    return Line.from_coeffs(1.0, 0.0, -float(x))


def perpendicular_at(line: Line, p: Sequence[float]) -> Line:
    """Line through ``p`` whose normal is the direction of ``line``."""
    a, b = -line.b, line.a
    return Line.from_coeffs(a, b, -(a * p[0] + b * p[1]))


def line_intersection(l1: Line, l2: Line) -> Optional[Point2]:
    det = l1.a * l2.b - l2.a * l1.b
    if abs(det) < PARALLEL_TOL:
        return None
    x = (l1.b * l2.c - l2.b * l1.c) / det
    y = (l2.a * l1.c - l1.a * l2.c) / det
    return Point2(x, y)


def clip_line_to_box(line: Line, box: BBox) -> Optional[Segment]:
    """Chord of ``line`` inside ``box`` (Liang-Barsky), endpoints sorted.

    Returns ``None`` when the line misses the box or only touches it in a
    single point.
    """
    f = line.foot
    dx, dy = -line.b, line.a
    t0, t1 = -math.inf, math.inf
    for p0, d, lo, hi in ((f.x, dx, box.xmin, box.xmax), (f.y, dy, box.ymin, box.ymax)):
        if d == 0.0:
            if p0 < lo or p0 > hi:
                return None
            continue
        ta = (lo - p0) / d
        tb = (hi - p0) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if not t0 < t1:
        return None
    a = _snap_to_box(Point2(f.x + dx * t0, f.y + dy * t0), box)
    b = _snap_to_box(Point2(f.x + dx * t1, f.y + dy * t1), box)
    if a == b:
        return None
    if b < a:
        a, b = b, a
    return Segment(a, b)


def _snap_to_box(p: Point2, box: BBox) -> Point2:
    # clamp round-off so chord endpoints sit exactly on the box boundary
    x = min(max(p.x, box.xmin), box.xmax)
    y = min(max(p.y, box.ymin), box.ymax)
    scale = max(box.width, box.height) * 1e-12
    for edge in (box.xmin, box.xmax):
        if abs(x - edge) <= scale:
            x = edge
    for edge in (box.ymin, box.ymax):
        if abs(y - edge) <= scale:
            y = edge
    return Point2(x, y)


# ---------------------------------------------------------------------------
# Primitive predicates


def cross(o: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def point_segment_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    ax, ay = a[0], a[1]
    dx, dy = b[0] - ax, b[1] - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2
    t = 0.0 if t < 0.0 else 1.0 if t > 1.0 else t
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def _within(p, a, b) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segments_intersect(p1, p2, q1, q2, eps: float = 0.0) -> bool:
    """Closed segment intersection test."""
    if (
        max(p1[0], p2[0]) < min(q1[0], q2[0]) - eps
        or max(q1[0], q2[0]) < min(p1[0], p2[0]) - eps
        or max(p1[1], p2[1]) < min(q1[1], q2[1]) - eps
        or max(q1[1], q2[1]) < min(p1[1], p2[1]) - eps
    ):
        return False
    d1 = cross(q1, q2, p1)
    d2 = cross(q1, q2, p2)
    d3 = cross(p1, p2, q1)
    d4 = cross(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    # exact touching: a zero orientation plus a bounding-box test, which the
    # distance below can miss by an ulp
    if (
        (d1 == 0.0 and _within(p1, q1, q2))
        or (d2 == 0.0 and _within(p2, q1, q2))
        or (d3 == 0.0 and _within(q1, p1, p2))
        or (d4 == 0.0 and _within(q2, p1, p2))
    ):
        return True
    return (
        point_segment_distance(p1, q1, q2) <= eps
        or point_segment_distance(p2, q1, q2) <= eps
        or point_segment_distance(q1, p1, p2) <= eps
        or point_segment_distance(q2, p1, p2) <= eps
    )


def segment_intersection_params(p1, p2, q1, q2) -> Optional[float]:
    """Parameter along p1->p2 of a proper crossing with q1-q2, else None."""
    rx, ry = p2[0] - p1[0], p2[1] - p1[1]
    sx, sy = q2[0] - q1[0], q2[1] - q1[1]
    den = rx * sy - ry * sx
    if den == 0.0:
        return None
    qpx, qpy = q1[0] - p1[0], q1[1] - p1[1]
    t = (qpx * sy - qpy * sx) / den
    u = (qpx * ry - qpy * rx) / den
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
        return min(max(t, 0.0), 1.0)
    return None


def ring_signed_area(coords: Sequence[Sequence[float]]) -> float:
    n = len(coords)
    s = 0.0
    for i in range(n):
        x0, y0 = coords[i][0], coords[i][1]
        x1, y1 = coords[(i + 1) % n][0], coords[(i + 1) % n][1]
        s += x0 * y1 - x1 * y0
    return s / 2.0


def ring_centroid(coords: Sequence[Sequence[float]]) -> Point2:
    """Vertex centroid (mean of the corners)."""
    n = len(coords)
    return Point2(sum(c[0] for c in coords) / n, sum(c[1] for c in coords) / n)


def is_convex(coords: Sequence[Sequence[float]], tol: float = 0.0) -> bool:
    n = len(coords)
    if n < 3:
        return False
    sign = 0
    for i in range(n):
        c = cross(coords[i], coords[(i + 1) % n], coords[(i + 2) % n])
        if c > tol:
            s = 1
        elif c < -tol:
            s = -1
        else:
            continue
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return sign != 0


def ring_is_simple(coords: Sequence[Sequence[float]]) -> bool:
    n = len(coords)
    if n < 3:
        return False
    edges = [(coords[i], coords[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        a1, a2 = edges[i]
        for j in range(i + 1, n):
            b1, b2 = edges[j]
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent edges share exactly one vertex; reject fold-backs
                shared = a2 if j == i + 1 else a1
                other_a = a1 if j == i + 1 else a2
                other_b = b2 if j == i + 1 else b1
                if cross(shared, other_a, other_b) == 0.0:
                    da = (other_a[0] - shared[0], other_a[1] - shared[1])
                    db = (other_b[0] - shared[0], other_b[1] - shared[1])
                    if da[0] * db[0] + da[1] * db[1] > 0:
                        return False
                continue
            if segments_intersect(a1, a2, b1, b2):
                return False
    return True


# ---------------------------------------------------------------------------
# Geometries


@dataclass(frozen=True)
class PointGeom:
    gid: int
    p: Point2

    kind = "point"

    def __post_init__(self):
        object.__setattr__(self, "p", point(*self.p))

    def bbox(self) -> tuple[float, float, float, float]:
        return (self.p.x, self.p.y, self.p.x, self.p.y)

    def coords(self) -> tuple[Point2, ...]:
        return (self.p,)


def _self_overlap(verts: Sequence[Sequence[float]], eps: float) -> bool:
    """True if two segments of the chain share a piece longer than ``eps``."""
    v = np.asarray(verts, dtype=float)
    if len(v) < 3:
        return False
    P, Q = v[:-1], v[1:]
    d = Q - P
    L = np.hypot(d[:, 0], d[:, 1])
    u = d / L[:, None]
    # distances of every segment's endpoints from every segment's line
    def off(X):
        rx = X[None, :, 0] - P[:, None, 0]
        ry = X[None, :, 1] - P[:, None, 1]
        return rx * u[:, None, 1] - ry * u[:, None, 0], rx * u[:, None, 0] + ry * u[:, None, 1]
    dp, tp = off(P)
    dq, tq = off(Q)
    on = (np.abs(dp) < eps) & (np.abs(dq) < eps)
    np.fill_diagonal(on, False)
    lo = np.maximum(np.minimum(tp, tq), 0.0)
    hi = np.minimum(np.maximum(tp, tq), L[:, None])
    return bool(np.any(on & (hi - lo > eps)))


@dataclass(frozen=True)
class Polyline:
    gid: int
    vertices: tuple[Point2, ...]

    kind = "polyline"

    def __post_init__(self):
        verts = tuple(point(*v) for v in self.vertices)
        if len(verts) < 2:
            raise InvalidGeometryError(f"polyline {self.gid} needs at least 2 vertices")
        for u, v in zip(verts, verts[1:]):
            if u == v:
                raise InvalidGeometryError(f"polyline {self.gid} repeats vertex {tuple(u)}")
        object.__setattr__(self, "vertices", verts)

    def validate(self, eps: float) -> None:
        for u, v in zip(self.vertices, self.vertices[1:]):
            if is_similar_point(u, v, eps):
                raise InvalidGeometryError(
                    f"polyline {self.gid} has similar consecutive vertices {tuple(u)}, {tuple(v)}"
                )
        if _self_overlap(self.vertices, eps):
            raise InvalidGeometryError(f"polyline {self.gid} runs over itself")

    @property
    def segments(self) -> list[Segment]:
        return [Segment(u, v) for u, v in zip(self.vertices, self.vertices[1:])]

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))

    def coords(self) -> tuple[Point2, ...]:
        return self.vertices

    @property
    def length(self) -> float:
        return polyline_length(self)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon stored as an open counter-clockwise ring."""

    gid: int
    vertices: tuple[Point2, ...]

    kind = "polygon"

    def __post_init__(self):
        verts = [point(*v) for v in self.vertices]
        if len(verts) >= 2 and verts[0] == verts[-1]:
            verts.pop()
        # drop exact repeats
        dedup = []
        for v in verts:
            if not dedup or dedup[-1] != v:
                dedup.append(v)
        if len(dedup) > 1 and dedup[0] == dedup[-1]:
            dedup.pop()
        if len(dedup) < 3:
            raise InvalidGeometryError(f"polygon {self.gid} needs at least 3 distinct corners")
        area = ring_signed_area(dedup)
        if area == 0.0:
            raise InvalidGeometryError(f"polygon {self.gid} has zero area")
        if area < 0:
            dedup.reverse()
        if not ring_is_simple(dedup):
            raise InvalidGeometryError(f"polygon {self.gid} is not simple")
        object.__setattr__(self, "vertices", tuple(dedup))

    @property
    def ring(self) -> tuple[Point2, ...]:
        """Closed ring (first vertex repeated at the end)."""
        return self.vertices + (self.vertices[0],)

    @property
    def edges(self) -> list[Segment]:
        v = self.vertices
        return [Segment(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))

    def coords(self) -> tuple[Point2, ...]:
        return self.vertices

    @property
    def area(self) -> float:
        return polygon_area(self)

    @property
    def is_convex(self) -> bool:
        return is_convex(self.vertices)


Geometry = PointGeom | Polyline | Polygon


def polygon_area(pg: Polygon | Sequence[Sequence[float]]) -> float:
    coords = pg.vertices if isinstance(pg, Polygon) else pg
    return abs(ring_signed_area(coords))


def polyline_length(pl: Polyline | Sequence[Sequence[float]]) -> float:
    coords = pl.vertices if isinstance(pl, Polyline) else pl
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(coords, coords[1:]))


def point_in_ring(p: Sequence[float], ring: Sequence[Sequence[float]], eps: float) -> Location:
    n = len(ring)
    px, py = p[0], p[1]
    for i in range(n):
        if point_segment_distance(p, ring[i], ring[(i + 1) % n]) < eps:
            return Location.ON_BOUNDARY
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = ring[i][0], ring[i][1]
        xj, yj = ring[j][0], ring[j][1]
        if (yi > py) != (yj > py):
            xc = xi + (py - yi) * (xj - xi) / (yj - yi)
            if px < xc:
                inside = not inside
        j = i
    return Location.INSIDE if inside else Location.OUTSIDE


def point_in_polygon(p: Sequence[float], pg: Polygon, eps: float = 1e-9) -> Location:
    """Even-odd classification; boundary decided by distance to the edges."""
    return point_in_ring(p, pg.vertices, eps)


def points_in_ring(xs: np.ndarray, ys: np.ndarray, ring: Sequence[Sequence[float]], eps: float) -> np.ndarray:
    """Vectorized :func:`point_in_ring`: 1 inside, 0 on boundary, -1 outside."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    r = np.asarray(ring, dtype=float)
    x0, y0 = r[:, 0], r[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    px = xs[:, None]
    py = ys[:, None]
    dx = x1 - x0
    dy = y1 - y0
    L2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = ((px - x0) * dx + (py - y0) * dy) / L2
    t = np.clip(np.nan_to_num(t), 0.0, 1.0)
    dist = np.hypot(px - (x0 + t * dx), py - (y0 + t * dy))
    on_boundary = (dist < eps).any(axis=1)
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(invalid="ignore", divide="ignore"):
        xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (px < xc)
    inside = (hits.sum(axis=1) % 2) == 1
    out = np.where(inside, 1, -1).astype(np.int8)
    out[on_boundary] = 0
    return out


# ---------------------------------------------------------------------------
# Clipping


def clip_convex(subject: Sequence[Sequence[float]], clipper: Sequence[Sequence[float]]) -> list[Point2]:
    """Sutherland-Hodgman: clip any simple ring by a convex CCW ring."""
    output = [Point2(float(p[0]), float(p[1])) for p in subject]
    n = len(clipper)
    for i in range(n):
        if not output:
            break
        a = clipper[i]
        b = clipper[(i + 1) % n]
        inp = output
        output = []
        m = len(inp)
        for j in range(m):
            cur = inp[j]
            prev = inp[j - 1]
            cin = cross(a, b, cur) >= 0
            pin = cross(a, b, prev) >= 0
            if cin:
                if not pin:
                    output.append(_line_seg_cross(a, b, prev, cur))
                output.append(cur)
            elif pin:
                output.append(_line_seg_cross(a, b, prev, cur))
    return output


def _line_seg_cross(a, b, p, q) -> Point2:
    dp = cross(a, b, p)
    dq = cross(a, b, q)
    t = dp / (dp - dq)
    return Point2(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def triangulate(coords: Sequence[Sequence[float]]) -> list[tuple[Point2, Point2, Point2]]:
    """Ear-clipping triangulation of a simple CCW ring."""
    pts = [Point2(float(p[0]), float(p[1])) for p in coords]
    if ring_signed_area(pts) < 0:
        pts.reverse()
    idx = list(range(len(pts)))
    tris = []
    guard = 0
    while len(idx) > 3 and guard < 10 * len(pts) ** 2:
        guard += 1
        n = len(idx)
        for k in range(n):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
            a, b, c = pts[i0], pts[i1], pts[i2]
            if cross(a, b, c) <= 0:
                continue
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = pts[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    ear = False
                    break
            if ear:
                tris.append((a, b, c))
                idx.pop(k)
                break
        else:
            break
    if len(idx) == 3:
        tris.append(tuple(pts[i] for i in idx))
    return tris


def intersection_area(p1: Sequence[Sequence[float]], p2: Sequence[Sequence[float]]) -> float:
    """Area of the intersection of two simple rings."""
    r1 = list(p1)
    r2 = list(p2)
    if ring_signed_area(r1) < 0:
        r1.reverse()
    if ring_signed_area(r2) < 0:
        r2.reverse()
    if is_convex(r2):
        return abs(ring_signed_area(clip_convex(r1, r2))) if len(r1) else 0.0
    if is_convex(r1):
        return abs(ring_signed_area(clip_convex(r2, r1)))
    total = 0.0
    for tri in triangulate(r2):
        clipped = clip_convex(r1, tri)
        if len(clipped) >= 3:
            total += abs(ring_signed_area(clipped))
    return total


def segment_clip_intervals(
    a: Sequence[float], b: Sequence[float], ring: Sequence[Sequence[float]], eps: float
) -> list[tuple[float, float]]:
    """Parameter intervals of segment a->b lying in the closed polygon ``ring``."""
    ts = {0.0, 1.0}
    n = len(ring)
    for i in range(n):
        q1, q2 = ring[i], ring[(i + 1) % n]
        t = segment_intersection_params(a, b, q1, q2)
        if t is not None:
            ts.add(t)
        # vertices touching the segment split it too
        d = point_segment_distance(q1, a, b)
        if d < eps:
            dx, dy = b[0] - a[0], b[1] - a[1]
            L2 = dx * dx + dy * dy
            if L2 > 0:
                tv = ((q1[0] - a[0]) * dx + (q1[1] - a[1]) * dy) / L2
                if 0.0 < tv < 1.0:
                    ts.add(tv)
    ordered = sorted(ts)
    out: list[tuple[float, float]] = []
    for t0, t1 in zip(ordered, ordered[1:]):
        if t1 - t0 <= 0.0:
            continue
        tm = (t0 + t1) / 2.0
        m = (a[0] + tm * (b[0] - a[0]), a[1] + tm * (b[1] - a[1]))
        if point_in_ring(m, ring, eps) is not Location.OUTSIDE:
            if out and out[-1][1] == t0:
                out[-1] = (out[-1][0], t1)
            else:
                out.append((t0, t1))
    return out


def segment_length_inside(a, b, ring, eps: float) -> float:
    L = math.hypot(b[0] - a[0], b[1] - a[1])
    return sum((t1 - t0) * L for t0, t1 in segment_clip_intervals(a, b, ring, eps))


def polyline_length_inside(coords: Sequence[Sequence[float]], ring, eps: float) -> float:
    return sum(segment_length_inside(a, b, ring, eps) for a, b in zip(coords, coords[1:]))


def segment_meets_box(a, b, box: BBox) -> bool:
    """Closed segment vs closed box."""
    if box.contains_point(a) or box.contains_point(b):
        return True
    t0, t1 = 0.0, 1.0
    dx, dy = b[0] - a[0], b[1] - a[1]
    for p, d, lo, hi in ((a[0], dx, box.xmin, box.xmax), (a[1], dy, box.ymin, box.ymax)):
        if d == 0.0:
            if p < lo or p > hi:
                return False
            continue
        ta, tb = (lo - p) / d, (hi - p) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return False
    return True


def geometry_meets_box(g: Geometry, box: BBox) -> bool:
    """Closed intersection test between a geometry and a box."""
    x0, y0, x1, y1 = g.bbox()
    if x0 > box.xmax or x1 < box.xmin or y0 > box.ymax or y1 < box.ymin:
        return False
    if isinstance(g, PointGeom):
        return box.contains_point(g.p)
    if isinstance(g, Polyline):
        return any(segment_meets_box(u, v, box) for u, v in zip(g.vertices, g.vertices[1:]))
    verts = g.vertices
    n = len(verts)
    for i in range(n):
        if segment_meets_box(verts[i], verts[(i + 1) % n], box):
            return True
    c = Point2((box.xmin + box.xmax) / 2, (box.ymin + box.ymax) / 2)
    return point_in_ring(c, verts, 0.0) is not Location.OUTSIDE
