"""Coordinate-level geometric predicates evaluated on the original geometries.

This is the ground truth the overlay engine is checked against and the
``naive`` query mode of the CLI: every pair is tested with an exact
geometric computation, no index and no precomputation.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

from .geom import (
    EpsilonConfig,
    Geometry,
    Location,
    PointGeom,
    Polygon,
    Polyline,
    intersection_area,
    is_similar_point,
    point_in_ring,
    point_segment_distance,
    polyline_length_inside,
    segment_clip_intervals,
    segments_intersect,
)

DEFAULT_EPS = EpsilonConfig()


class PredicateCounter:
    def __init__(self):
        self.count = 0

    def tick(self, n: int = 1) -> None:
        self.count += n


def _edges(ring):
    n = len(ring)
    return [(ring[i], ring[(i + 1) % n]) for i in range(n)]


def _segs(g) -> list:
    if isinstance(g, Polyline):
        v = g.vertices
        return list(zip(v, v[1:]))
    return _edges(g.vertices)


def _bbox_apart(g1: Geometry, g2: Geometry, eps: float) -> bool:
    a, b = g1.bbox(), g2.bbox()
    return a[0] > b[2] + eps or b[0] > a[2] + eps or a[1] > b[3] + eps or b[1] > a[3] + eps


def intersects(g1: Geometry, g2: Geometry, eps: EpsilonConfig = DEFAULT_EPS) -> bool:
    """Closed-set intersection (boundaries count)."""
    pe = eps.point_eps
    if _bbox_apart(g1, g2, pe):
        return False
    if isinstance(g2, PointGeom) and not isinstance(g1, PointGeom):
        g1, g2 = g2, g1
    if isinstance(g1, PointGeom):
        p = g1.p
        if isinstance(g2, PointGeom):
            return is_similar_point(p, g2.p, pe)
        if isinstance(g2, Polyline):
            return any(point_segment_distance(p, a, b) < pe for a, b in _segs(g2))
        return point_in_ring(p, g2.vertices, pe) is not Location.OUTSIDE
    for a, b in _segs(g1):
        for c, d in _segs(g2):
            if segments_intersect(a, b, c, d, pe):
                return True
    if isinstance(g2, Polygon) and point_in_ring(g1.coords()[0], g2.vertices, pe) is not Location.OUTSIDE:
        return True
    if isinstance(g1, Polygon) and point_in_ring(g2.coords()[0], g1.vertices, pe) is not Location.OUTSIDE:
        return True
    return False


def _collinear_overlap(a, b, c, d, eps: float) -> float:
    """Length shared by two segments lying on a common line."""
    if point_segment_distance(c, a, b) >= eps and point_segment_distance(d, a, b) >= eps:
        # not both on ab; maybe ab lies inside cd
        if not (point_segment_distance(a, c, d) < eps and point_segment_distance(b, c, d) < eps):
            return 0.0
    L = math.hypot(b[0] - a[0], b[1] - a[1])
    if L == 0:
        return 0.0
    ux, uy = (b[0] - a[0]) / L, (b[1] - a[1]) / L
    # both endpoints of cd must lie on the line through ab
    for p in (c, d):
        if abs((p[0] - a[0]) * uy - (p[1] - a[1]) * ux) >= eps:
            return 0.0
    tc = (c[0] - a[0]) * ux + (c[1] - a[1]) * uy
    td = (d[0] - a[0]) * ux + (d[1] - a[1]) * uy
    lo, hi = max(0.0, min(tc, td)), min(L, max(tc, td))
    return max(0.0, hi - lo)


def common_length(g1: Geometry, g2: Geometry, eps: EpsilonConfig = DEFAULT_EPS) -> float:
    """Length of the one-dimensional part of the intersection.

    For two overlapping polygons the overlap has positive area, which is
    reported as infinity.
    """
    pe = eps.point_eps
    if isinstance(g1, PointGeom) or isinstance(g2, PointGeom) or _bbox_apart(g1, g2, pe):
        return 0.0
    if isinstance(g1, Polygon) and isinstance(g2, Polygon):
        if intersection_area(g1.vertices, g2.vertices) > eps.area_eps:
            return math.inf
    if isinstance(g1, Polyline) and isinstance(g2, Polygon):
        return polyline_length_inside(g1.vertices, g2.vertices, pe)
    if isinstance(g2, Polyline) and isinstance(g1, Polygon):
        return polyline_length_inside(g2.vertices, g1.vertices, pe)
    return sum(_collinear_overlap(a, b, c, d, pe) for a, b in _segs(g1) for c, d in _segs(g2))


def overlap_area(g1: Geometry, g2: Geometry) -> float:
    if not (isinstance(g1, Polygon) and isinstance(g2, Polygon)):
        return 0.0
    if _bbox_apart(g1, g2, 0.0):
        return 0.0
    return intersection_area(g1.vertices, g2.vertices)


def intersects_at(g1: Geometry, g2: Geometry, sublevel: str, eps: EpsilonConfig = DEFAULT_EPS) -> bool:
    """Intersection at a sub-level: Point (any contact), LineString (a common
    piece of positive length) or Polygon (common area)."""
    s = sublevel.lower()
    if s == "point":
        return intersects(g1, g2, eps)
    if s == "linestring":
        return common_length(g1, g2, eps) > 10 * eps.point_eps
    if s == "polygon":
        return overlap_area(g1, g2) > eps.area_eps
    raise ValueError(f"unknown sub-level {sublevel!r}")


def contains(a: Geometry, b: Geometry, eps: EpsilonConfig = DEFAULT_EPS) -> bool:
    """``b`` lies in the closed set ``a``."""
    pe = eps.point_eps
    if _bbox_apart(a, b, pe):
        return False
    if isinstance(b, PointGeom):
        return intersects(a, b, eps)
    if isinstance(a, PointGeom):
        return False
    if isinstance(b, Polyline):
        total = b.length
        if isinstance(a, Polygon):
            inside = polyline_length_inside(b.vertices, a.vertices, pe)
        else:
            inside = sum(_collinear_overlap(p, q, c, d, pe) for p, q in _segs(b) for c, d in _segs(a))
        return inside >= total - max(10 * pe, 1e-9 * total)
    if isinstance(a, Polyline):
        return False
    area = b.area
    return intersection_area(b.vertices, a.vertices) >= area - max(eps.area_eps, 1e-9 * area)


def naive_join(
    A: Iterable[Geometry],
    B: Iterable[Geometry],
    predicate,
    counter: PredicateCounter | None = None,
) -> set[tuple[int, int]]:
    """Nested-loop join: every pair is tested."""
    out = set()
    B = list(B)
    for a in A:
        for b in B:
            if counter is not None:
                counter.tick()
            if predicate(a, b):
                out.add((a.gid, b.gid))
    return out


def clipped_length(g: Geometry, region: Sequence[Polygon], eps: EpsilonConfig = DEFAULT_EPS) -> float:
    if isinstance(g, Polyline):
        return sum(polyline_length_inside(g.vertices, r.vertices, eps.point_eps) for r in region)
    if isinstance(g, Polygon):
        ring = g.vertices + (g.vertices[0],)
        return sum(polyline_length_inside(ring, r.vertices, eps.point_eps) for r in region)
    return 0.0


def clipped_area(g: Geometry, region: Sequence[Polygon]) -> float:
    if not isinstance(g, Polygon):
        return 0.0
    return sum(intersection_area(g.vertices, r.vertices) for r in region)


def _union(iv: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    for a, b in sorted(iv):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _meet(x: list[tuple[float, float]], y: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out = []
    for a0, a1 in x:
        for b0, b1 in y:
            lo, hi = max(a0, b0), min(a1, b1)
            if hi > lo:
                out.append((lo, hi))
    return out


def length_inside_all(g: Polyline, *regions: Sequence[Polygon], eps: EpsilonConfig = DEFAULT_EPS) -> float:
    """Length of ``g`` inside the intersection of several polygon unions."""
    total = []
    for a, b in zip(g.vertices, g.vertices[1:]):
        iv = [(0.0, 1.0)]
        for reg in regions:
            iv = _meet(iv, _union([t for r in reg for t in segment_clip_intervals(a, b, r.vertices, eps.point_eps)]))
        total.append(math.hypot(b[0] - a[0], b[1] - a[1]) * sum(t1 - t0 for t0, t1 in iv))
    return math.fsum(total)


def in_region(g: Geometry, region: Sequence[Polygon], eps: EpsilonConfig = DEFAULT_EPS) -> bool:
    return any(intersects(g, r, eps) for r in region)
