"""Carrier lines of geometries and layers, deduplicated across layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .geom import (
    Geometry,
    Line,
    PointGeom,
    Polygon,
    Polyline,
    Point2,
    horizontal_line,
    line_through,
    perpendicular_at,
    vertical_line,
)
from .layer import Layer

Source = tuple[str, int]


def carriers_of_point(p: Sequence[float]) -> list[Line]:
    return [vertical_line(p[0]), horizontal_line(p[1])]


def carriers_of_polyline(pl: Polyline, line_eps: float = 1e-9) -> list[Line]:
    v = pl.vertices
    lines = [line_through(a, b) for a, b in zip(v, v[1:])]
    if v[0] != v[-1]:
        first, last = lines[0], lines[-1]
        lines.append(perpendicular_at(first, v[0]))
        lines.append(perpendicular_at(last, v[-1]))
    return dedup_lines(lines, line_eps)


def carriers_of_polygon(pg: Polygon, line_eps: float = 1e-9) -> list[Line]:
    return dedup_lines([line_through(e.p, e.q) for e in pg.edges], line_eps)


def carriers_of(g: Geometry, line_eps: float = 1e-9) -> list[Line]:
    if isinstance(g, PointGeom):
        return carriers_of_point(g.p)
    if isinstance(g, Polyline):
        return carriers_of_polyline(g, line_eps)
    return carriers_of_polygon(g, line_eps)


def _close(l1: Line, l2: Line, eps: float) -> bool:
    return abs(l1.a - l2.a) < eps and abs(l1.b - l2.b) < eps and abs(l1.c - l2.c) < eps


def dedup_groups(lines: Iterable[Line], eps: float) -> list[tuple[Line, list[int]]]:
    """Group near-equal lines.

    Returns ``(representative, member indexes)`` pairs sorted by the
    representative. The representative is the smallest member, so the
    result depends only on the multiset of input lines.
    """
    lines = list(lines)
    order = sorted(range(len(lines)), key=lambda i: lines[i].key())
    groups: list[tuple[Line, list[int]]] = []
    for i in order:
        ln = lines[i]
        hit = None
        # groups are appended in ascending `a`; scan back while within eps
        for gi in range(len(groups) - 1, -1, -1):
            rep = groups[gi][0]
            if rep.a <= ln.a - eps:
                break
            if _close(rep, ln, eps):
                hit = gi
                break
        if hit is None:
            groups.append((ln, [i]))
        else:
            groups[hit][1].append(i)
    groups.sort(key=lambda g: g[0].key())
    return groups


def dedup_lines(lines: Iterable[Line], eps: float = 1e-9) -> list[Line]:
    return [rep for rep, _ in dedup_groups(lines, eps)]


@dataclass
class CarrierSet:
    lines: list[Line] = field(default_factory=list)
    provenance: dict[Line, frozenset[Source]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.lines)

    def __iter__(self):
        return iter(self.lines)

    def __contains__(self, line: object) -> bool:
        return line in self.provenance

    def sources(self, line: Line) -> frozenset[Source]:
        return self.provenance[line]

    def lines_for(self, keep: set[Source] | frozenset[Source]) -> list[Line]:
        """Lines generated by at least one geometry in ``keep``, in canonical order."""
        return [ln for ln in self.lines if not self.provenance[ln].isdisjoint(keep)]

    def by_source(self) -> dict[Source, list[int]]:
        out: dict[Source, list[int]] = {}
        for i, ln in enumerate(self.lines):
            for s in self.provenance[ln]:
                out.setdefault(s, []).append(i)
        return out


def carriers_of_layers(layers: Sequence[Layer], line_eps: float = 1e-9) -> CarrierSet:
    raw: list[Line] = []
    src: list[Source] = []
    for layer in layers:
        for gid in sorted(layer.geometries):
            for ln in carriers_of(layer.geometries[gid], line_eps):
                raw.append(ln)
                src.append((layer.name, gid))
    cs = CarrierSet()
    for rep, members in dedup_groups(raw, line_eps):
        cs.lines.append(rep)
        cs.provenance[rep] = frozenset(src[i] for i in members)
    return cs


def carrier_bound(layers: Sequence[Layer]) -> int:
    """Upper bound 2|P| + |L|(n_L + 2) + |R| n_R on the carrier set size."""
    n_p = n_l = n_r = 0
    seg_l = edge_r = 0
    for layer in layers:
        for g in layer:
            if isinstance(g, PointGeom):
                n_p += 1
            elif isinstance(g, Polyline):
                n_l += 1
                seg_l = max(seg_l, len(g.vertices) - 1)
            else:
                n_r += 1
                edge_r = max(edge_r, len(g.vertices))
    return 2 * n_p + n_l * (seg_l + 2) + n_r * edge_r
