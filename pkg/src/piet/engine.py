"""Summable aggregation over a precomputed overlay.

Regions are sets of geometry ids obtained by joining association tables;
no coordinate is looked at for those. Only :func:`eval_in_query_region`
evaluates geometric predicates, and only inside grid cells crossed by the
query region boundary. Every such evaluation is counted on a
:class:`QueryContext`.
"""

from __future__ import annotations

import ast
import contextvars
import csv
import io
import math
import operator
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .dims import GisFactTable
from .errors import QueryError, UnknownGeometryError, UnsupportedAggregateError
from .geom import (
    BBox,
    Location,
    PointGeom,
    Polygon,
    Polyline,
    geometry_meets_box,
    intersection_area,
    point_in_ring,
    segment_clip_intervals,
)
from .subdivision import CellKind, Overlay

AGG_KINDS = ("count", "sum", "avg", "min", "max", "length", "area")

_SUBLEVELS = {
    "point": CellKind.NODE,
    "node": CellKind.NODE,
    "subnode": CellKind.NODE,
    "linestring": CellKind.LINE,
    "line": CellKind.LINE,
    "polyline": CellKind.LINE,
    "subline": CellKind.LINE,
    "polygon": CellKind.POLYGON,
    "subpolygon": CellKind.POLYGON,
}


def parse_sublevel(s: str | CellKind) -> CellKind:
    if isinstance(s, CellKind):
        return s
    key = s.strip().lower()
    if key.startswith("subplevel."):
        key = key[len("subplevel."):]
    try:
        return _SUBLEVELS[key]
    except KeyError:
        raise QueryError(f"unknown sub-level {s!r}; expected Point, LineString or Polygon") from None


# ---------------------------------------------------------------------------
# Instrumentation


@dataclass
class QueryContext:
    """Per-query counters; pass one explicitly or use the ambient default."""

    predicates: int = 0
    grid_visited: int = 0
    warnings: list[str] = field(default_factory=list)

    def tick(self, n: int = 1) -> None:
        self.predicates += n

    def reset(self) -> None:
        self.predicates = 0
        self.grid_visited = 0
        self.warnings.clear()


_current: contextvars.ContextVar[QueryContext] = contextvars.ContextVar("piet_query_context")


def current_context() -> QueryContext:
    ctx = _current.get(None)
    if ctx is None:
        ctx = QueryContext()
        _current.set(ctx)
    return ctx


def _ctx(ctx: QueryContext | None) -> QueryContext:
    return ctx if ctx is not None else current_context()


def predicate_eval_counter(ctx: QueryContext | None = None) -> int:
    """Exact geometric predicate evaluations since the last reset."""
    return _ctx(ctx).predicates


def reset_counter(ctx: QueryContext | None = None) -> None:
    _ctx(ctx).reset()


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class RegionIds:
    layer: str
    level: str
    ids: frozenset[int]
    provenance: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(sorted(self.ids))

    @classmethod
    def of(cls, overlay: Overlay, layer: str, ids: Iterable[int], provenance: Sequence[str] = ()) -> "RegionIds":
        if layer not in overlay.layers:
            raise QueryError(f"layer {layer!r} is not part of overlay {overlay.combo}")
        lay = overlay.layers[layer]
        ids = frozenset(ids)
        for g in ids:
            if g not in lay.geometries:
                raise UnknownGeometryError(f"gid {g} not in layer {layer}")
        kinds = {lay.geometries[g].kind for g in ids} or set(lay.kinds)
        level = kinds.pop() if len(kinds) == 1 else "mixed"
        return cls(layer, level, ids, tuple(provenance))

    def union(self, other: "RegionIds") -> "RegionIds":
        if other.layer != self.layer:
            raise QueryError("union of regions over different layers")
        lvl = self.level if self.level == other.level else "mixed"
        return RegionIds(self.layer, lvl, self.ids | other.ids, self.provenance + other.provenance)


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _compile_measure(expr: str) -> tuple[Callable[[Mapping[str, float]], Optional[float]], tuple[str, ...]]:
    """Compile ``expr`` over the grammar {numbers, measure names, + - * /}."""
    try:
        tree = ast.parse(expr, mode="eval").body
    except SyntaxError as e:
        raise QueryError(f"bad measure expression {expr!r}: {e.msg}") from None
    names: list[str] = []

    def check(n):
        if isinstance(n, ast.BinOp) and type(n.op) in _BINOPS:
            check(n.left)
            check(n.right)
        elif isinstance(n, ast.UnaryOp) and isinstance(n.op, (ast.USub, ast.UAdd)):
            check(n.operand)
        elif isinstance(n, ast.Constant) and isinstance(n.value, (int, float)) and not isinstance(n.value, bool):
            pass
        elif isinstance(n, ast.Name):
            names.append(n.id)
        else:
            raise QueryError(f"measure expression {expr!r} uses unsupported syntax")

    check(tree)

    def ev(n, row):
        if isinstance(n, ast.Constant):
            return float(n.value)
        if isinstance(n, ast.Name):
            v = row.get(n.id)
            return float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else None
        if isinstance(n, ast.UnaryOp):
            v = ev(n.operand, row)
            return None if v is None else (-v if isinstance(n.op, ast.USub) else v)
        a, b = ev(n.left, row), ev(n.right, row)
        if a is None or b is None:
            return None
        if isinstance(n.op, ast.Div) and b == 0:
            return None
        return _BINOPS[type(n.op)](a, b)

    return (lambda row: ev(tree, row)), tuple(dict.fromkeys(names))


@dataclass(frozen=True)
class Aggregator:
    kind: str
    measure: Optional[str] = None

    def __post_init__(self):
        k = self.kind.lower()
        if k not in AGG_KINDS:
            raise UnsupportedAggregateError(f"aggregate {self.kind!r} not in {AGG_KINDS}")
        object.__setattr__(self, "kind", k)
        if k in ("sum", "avg", "min", "max") and not self.measure:
            raise UnsupportedAggregateError(f"{k} needs a measure")
        if self.measure:
            _compile_measure(self.measure)

    def evaluator(self):
        return _compile_measure(self.measure)[0] if self.measure else (lambda row: 1.0)


@dataclass(frozen=True)
class QueryRegion:
    polygons: tuple[Polygon, ...]
    name: str = "qr"

    def __post_init__(self):
        polys = tuple(self.polygons)
        if not polys:
            raise QueryError("query region needs at least one polygon")
        for p in polys:
            if not isinstance(p, Polygon):
                raise QueryError("query region members must be polygons")
        object.__setattr__(self, "polygons", polys)

    @classmethod
    def from_layer(cls, layer, gids: Iterable[int] | None = None) -> "QueryRegion":
        gids = sorted(layer.geometries) if gids is None else list(gids)
        return cls(tuple(layer[g] for g in gids), layer.name)

    @classmethod
    def box(cls, xmin: float, ymin: float, xmax: float, ymax: float) -> "QueryRegion":
        return cls((Polygon(0, [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]),))

    def bbox(self) -> tuple[float, float, float, float]:
        bbs = [p.bbox() for p in self.polygons]
        return (min(b[0] for b in bbs), min(b[1] for b in bbs), max(b[2] for b in bbs), max(b[3] for b in bbs))

    @property
    def area(self) -> float:
        return sum(p.area for p in self.polygons)


# ---------------------------------------------------------------------------
# Region construction from association tables


def _require(overlay: Overlay, *layers: str) -> None:
    for name in layers:
        if name not in overlay.layers:
            from .errors import MissingCombinationError

            raise MissingCombinationError(f"layer {name!r} is not in overlay {overlay.combo}")


def _cells_by_layer(overlay: Overlay, kind: CellKind, layer: str) -> dict[int, tuple[int, ...]]:
    """cell id -> gids of ``layer`` associated with it (cached on the overlay)."""
    cache = overlay.index.setdefault("by_layer", {})
    key = (kind, layer)
    if key not in cache:
        d: dict[int, list[int]] = defaultdict(list)
        for cid, owners in overlay.index["cell_gids"][kind].items():
            for lay, gid in owners:
                if lay == layer:
                    d[cid].append(gid)
        cache[key] = {c: tuple(sorted(g)) for c, g in d.items()}
    return cache[key]


def _restrict(d: dict[int, tuple[int, ...]], ids: Optional[Iterable[int]]) -> dict[int, tuple[int, ...]]:
    if ids is None:
        return d
    keep = set(ids)
    out = {}
    for c, gs in d.items():
        sel = tuple(g for g in gs if g in keep)
        if sel:
            out[c] = sel
    return out


def region_intersection(
    overlay: Overlay,
    layer_a: str,
    layer_b: str,
    sublevel: str | CellKind = "Point",
    a_ids: Optional[Iterable[int]] = None,
    b_ids: Optional[Iterable[int]] = None,
) -> set[tuple[int, int]]:
    """Pairs (gidA, gidB) sharing at least one cell of the sub-level kind."""
    _require(overlay, layer_a, layer_b)
    kind = parse_sublevel(sublevel)
    da = _restrict(_cells_by_layer(overlay, kind, layer_a), a_ids)
    db = _restrict(_cells_by_layer(overlay, kind, layer_b), b_ids)
    pairs: set[tuple[int, int]] = set()
    small, big, flip = (da, db, False) if len(da) <= len(db) else (db, da, True)
    for cid, gs in small.items():
        other = big.get(cid)
        if not other:
            continue
        for g in gs:
            for h in other:
                pairs.add((h, g) if flip else (g, h))
    return pairs


def region_contains(
    overlay: Overlay,
    layer_a: str,
    layer_b: str,
    sublevel: str | CellKind = "Point",
    a_ids: Optional[Iterable[int]] = None,
    b_ids: Optional[Iterable[int]] = None,
) -> set[tuple[int, int]]:
    """Pairs (gidA, gidB) such that every cell of B of the sub-level kind is
    associated with A; B must have at least one such cell."""
    _require(overlay, layer_a, layer_b)
    kind = parse_sublevel(sublevel)
    da = _restrict(_cells_by_layer(overlay, kind, layer_a), a_ids)
    lay_b = overlay.layers[layer_b]
    keep_b = None if b_ids is None else set(b_ids)
    pairs: set[tuple[int, int]] = set()
    for gb in lay_b.geometries:
        if keep_b is not None and gb not in keep_b:
            continue
        cells = overlay.cells_of(layer_b, gb, kind)
        if not cells:
            continue
        cand: Optional[set[int]] = None
        for c in cells:
            owners = da.get(c)
            if not owners:
                cand = set()
                break
            cand = set(owners) if cand is None else cand.intersection(owners)
            if not cand:
                break
        for ga in cand or ():
            pairs.add((ga, gb))
    return pairs


def rollup_map(
    overlay: Overlay, child_layer: str, parent_layer: str, sublevel: str | CellKind | None = None
) -> dict[int, frozenset[int]]:
    """Child gid -> parent gids containing it, from the association tables."""
    if sublevel is None:
        kinds = overlay.layers[child_layer].kinds
        sublevel = "point" if kinds == {"point"} else "linestring" if kinds == {"polyline"} else "polygon"
    out: dict[int, set[int]] = defaultdict(set)
    for a, b in region_contains(overlay, parent_layer, child_layer, sublevel):
        out[b].add(a)
    return {k: frozenset(v) for k, v in out.items()}


def decide_summability(region: Iterable[int], overlay: Overlay) -> bool:
    """True iff the cell set is the union of the extents of some geometries.

    Each layer and each geometry kind in it is tried in turn: take every
    geometry whose extent lies inside the region and compare the union of
    their extents with the region.
    """
    C = frozenset(region)
    if not C:
        return True
    for name in sorted(overlay.layers):
        layer = overlay.layers[name]
        for kind in sorted(layer.kinds):
            union: set[int] = set()
            for gid, g in layer.geometries.items():
                if g.kind != kind:
                    continue
                e = overlay.ext(name, gid)
                if e and e <= C:
                    union |= e
            if union == C:
                return True
    return False


# ---------------------------------------------------------------------------
# Aggregation


@dataclass
class AggResult:
    """Aggregate values keyed by group (``None`` when ungrouped)."""

    agg: Aggregator
    values: dict
    exact: dict = field(default_factory=dict)
    skipped: int = 0
    report: Optional["RegionReport"] = None

    @property
    def scalar(self):
        return self.values.get(None)

    def to_csv(self, key_names: Sequence[str] = ("group",)) -> str:
        return result_csv(self, key_names)


def _fact_rows(overlay: Overlay, layer: str, facts) -> dict[int, Mapping[str, float]]:
    if facts is None:
        return overlay.layers[layer].attributes
    tables = [facts] if isinstance(facts, GisFactTable) else list(facts)
    rows: dict[int, dict[str, float]] = {}
    for t in tables:
        if t.layer == layer:
            for g, r in t.rows.items():
                rows.setdefault(g, {}).update(r)
    return rows


def _groups_of(group_by, gid) -> Iterable:
    if group_by is None:
        return (None,)
    if group_by == "gid":
        return (gid,)
    return group_by.get(gid, ())


def _finish(kind: str, acc: dict) -> dict:
    out = {}
    for k, vals in acc.items():
        if kind == "count":
            out[k] = len(vals)
        elif not vals:
            continue
        elif kind in ("sum", "length", "area"):
            out[k] = math.fsum(vals)
        elif kind == "avg":
            out[k] = math.fsum(vals) / len(vals)
        elif kind == "min":
            out[k] = min(vals)
        elif kind == "max":
            out[k] = max(vals)
    return out


def _size(overlay: Overlay, layer: str, gid: int, kind: str) -> float:
    cells = overlay.cells
    if kind == "length":
        g = overlay.layers[layer][gid]
        if not isinstance(g, Polyline):
            raise UnsupportedAggregateError("length is defined for polyline layers")
        return math.fsum(cells[c].length for c in overlay.cells_of(layer, gid, CellKind.LINE))
    g = overlay.layers[layer][gid]
    if not isinstance(g, Polygon):
        raise UnsupportedAggregateError("area is defined for polygon layers")
    return math.fsum(cells[c].area for c in overlay.cells_of(layer, gid, CellKind.POLYGON))


def eval_summable(
    overlay: Overlay,
    region: RegionIds,
    agg: Aggregator,
    facts=None,
    group_by: Mapping[int, Iterable] | str | None = None,
    ctx: QueryContext | None = None,
) -> AggResult:
    """Sum of h'(g) over the ids of ``region``.

    ``facts`` is a fact table (or several); without it the layer attributes
    are used. ``group_by`` maps each gid to its group keys, typically the
    output of :func:`rollup_map`, or is ``"gid"`` for one group per id.
    Ids lacking the measure are skipped and counted.
    """
    ctx = _ctx(ctx)
    _require(overlay, region.layer)
    h = agg.evaluator()
    rows = _fact_rows(overlay, region.layer, facts)
    acc: dict = defaultdict(list)
    if group_by is None:
        acc[None]
    skipped = 0
    for gid in sorted(region.ids):
        if agg.kind in ("length", "area"):
            v = _size(overlay, region.layer, gid, agg.kind)
        elif agg.kind == "count":
            v = 1.0
        else:
            v = h(rows.get(gid, {}))
            if v is None:
                skipped += 1
                continue
        for key in _groups_of(group_by, gid):
            acc[key].append(v)
    if skipped:
        ctx.warnings.append(f"{skipped} ids lack measure {agg.measure!r}")
    values = _finish(agg.kind, acc)
    return AggResult(agg, values, {k: True for k in values}, skipped)


# ---------------------------------------------------------------------------
# Query regions


@dataclass
class RegionReport:
    grid_intersecting: int = 0
    grid_inside: int = 0
    grid_visited: int = 0
    boundary_cells: int = 0
    predicates: int = 0
    mode: str = "fast"

    @property
    def exact(self) -> bool:
        return self.mode == "exact" or self.boundary_cells == 0


def _rect_poly(r: BBox) -> Polygon:
    return Polygon(0, r.corners())


def _rect_vs_region(rect: BBox, qr: QueryRegion) -> int:
    """1 rect inside qr, 0 crossing, -1 disjoint."""
    if not any(geometry_meets_box(p, rect) for p in qr.polygons):
        return -1
    ring = rect.corners()
    covered = sum(intersection_area(ring, p.vertices) for p in qr.polygons)
    return 1 if covered >= rect.area * (1 - 1e-12) else 0


def _cell_fraction(cell, qr: QueryRegion, eps: float) -> float:
    if cell.kind is CellKind.NODE:
        inside = any(point_in_ring(cell.coords[0], p.vertices, eps) is not Location.OUTSIDE for p in qr.polygons)
        return 1.0 if inside else 0.0
    if cell.kind is CellKind.LINE:
        a, b = cell.coords
        f = sum(t1 - t0 for p in qr.polygons for t0, t1 in segment_clip_intervals(a, b, p.vertices, eps))
        return min(1.0, f)
    area = cell.area
    if area <= 0:
        return 0.0
    return min(1.0, sum(intersection_area(cell.coords, p.vertices) for p in qr.polygons) / area)


def eval_in_query_region(
    overlay: Overlay,
    qr: QueryRegion,
    layer: str,
    agg: Aggregator,
    facts=None,
    mode: str = "fast",
    group_by: Mapping[int, Iterable] | str | None = None,
    ids: Optional[Iterable[int]] = None,
    ctx: QueryContext | None = None,
) -> AggResult:
    """Aggregate over the part of ``layer`` inside the query region.

    Only grid cells whose rectangle meets ``qr`` are visited. Cells of grid
    rectangles lying inside ``qr`` are taken whole with no predicate; in
    the remaining rectangles each cell is tested against ``qr``. For
    ``length``/``area`` a crossing cell counts whole in fast mode (and the
    group is flagged inexact) or clipped in exact mode. Other aggregates
    select every geometry with a cell meeting ``qr``.
    """
    if mode not in ("fast", "exact"):
        raise QueryError(f"mode must be fast or exact, not {mode!r}")
    ctx = _ctx(ctx)
    _require(overlay, layer)
    lay = overlay.layers[layer]
    keep = None if ids is None else set(ids)
    if agg.kind == "length" and lay.kinds != {"polyline"}:
        raise UnsupportedAggregateError("length is defined for polyline layers")
    if agg.kind == "area" and lay.kinds != {"polygon"}:
        raise UnsupportedAggregateError("area is defined for polygon layers")
    want = {"length": (CellKind.LINE,), "area": (CellKind.POLYGON,)}.get(agg.kind, tuple(CellKind))
    owner_maps = {k: _cells_by_layer(overlay, k, layer) for k in want}

    rep = RegionReport(mode=mode)
    eps = overlay.eps.point_eps
    rows, cols = overlay.grid.span(overlay.box, qr.bbox())
    sizes: dict[int, list[float]] = defaultdict(list)
    inexact: set[int] = set()
    selected: set[int] = set()
    cells = overlay.cells
    for r in rows:
        for c in cols:
            rect = overlay.grid.rect(overlay.box, r, c)
            where = _rect_vs_region(rect, qr)
            if where < 0:
                continue
            rep.grid_intersecting += 1
            rep.grid_visited += 1
            ctx.grid_visited += 1
            if where > 0:
                rep.grid_inside += 1
            for cid in overlay.grid_cells((r, c)):
                cell = cells[cid]
                owners = owner_maps.get(cell.kind, {}).get(cid)
                if not owners:
                    continue
                if keep is not None:
                    owners = tuple(g for g in owners if g in keep)
                    if not owners:
                        continue
                if where > 0:
                    frac = 1.0
                else:
                    ctx.tick()
                    rep.predicates += 1
                    frac = _cell_fraction(cell, qr, eps)
                    if frac <= 0.0:
                        continue
                crossing = frac < 1.0 - 1e-12
                if crossing:
                    rep.boundary_cells += 1
                for g in owners:
                    selected.add(g)
                    if agg.kind in ("length", "area"):
                        size = cell.length if agg.kind == "length" else cell.area
                        if crossing and mode == "exact":
                            size *= frac
                        elif crossing:
                            inexact.add(g)
                        sizes[g].append(size)

    acc: dict = defaultdict(list)
    if group_by is None:
        acc[None]
    exact: dict = {}
    skipped = 0
    h = agg.evaluator()
    rows_f = _fact_rows(overlay, layer, facts) if agg.kind in ("sum", "avg", "min", "max") else {}
    for g in sorted(selected):
        if agg.kind in ("length", "area"):
            v = math.fsum(sizes[g])
        elif agg.kind == "count":
            v = 1.0
        else:
            v = h(rows_f.get(g, {}))
            if v is None:
                skipped += 1
                continue
        for key in _groups_of(group_by, g):
            acc[key].append(v)
            exact[key] = exact.get(key, True) and g not in inexact
    values = _finish(agg.kind, acc)
    res = AggResult(agg, values, {k: exact.get(k, True) for k in values}, skipped, rep)
    return res


def shared_measure(
    overlay: Overlay,
    layer: str,
    parent_layer: str,
    kind: str = "length",
    parent_ids: Optional[Iterable[int]] = None,
    qr: Optional[QueryRegion] = None,
    mode: str = "exact",
    ctx: QueryContext | None = None,
) -> dict[tuple[int, int], float]:
    """Length (or area) of each ``layer`` geometry inside each parent.

    Sums the cells a child shares with a parent polygon, keyed by
    ``(parent, child)``. With ``qr`` only the part inside the query region
    counts; crossing cells are clipped in exact mode and taken whole in
    fast mode, and predicates run only in grid rectangles crossing ``qr``.
    """
    if mode not in ("fast", "exact"):
        raise QueryError(f"mode must be fast or exact, not {mode!r}")
    if kind not in ("length", "area"):
        raise UnsupportedAggregateError(f"shared measure is length or area, not {kind!r}")
    ctx = _ctx(ctx)
    _require(overlay, layer)
    _require(overlay, parent_layer)
    ck = CellKind.LINE if kind == "length" else CellKind.POLYGON
    child_of = _cells_by_layer(overlay, ck, layer)
    parent_of = _cells_by_layer(overlay, ck, parent_layer)
    keep = None if parent_ids is None else set(parent_ids)
    cells = overlay.cells
    eps = overlay.eps.point_eps
    acc: dict[tuple[int, int], list[float]] = defaultdict(list)

    def visit(cid: int, frac: float) -> None:
        size = cells[cid].length if kind == "length" else cells[cid].area
        for p in parent_of.get(cid, ()):
            if keep is not None and p not in keep:
                continue
            for c in child_of[cid]:
                acc[(p, c)].append(size * frac)

    if qr is None:
        for cid in child_of:
            if cid in parent_of:
                visit(cid, 1.0)
    else:
        rows, cols = overlay.grid.span(overlay.box, qr.bbox())
        for r in rows:
            for c in cols:
                rect = overlay.grid.rect(overlay.box, r, c)
                where = _rect_vs_region(rect, qr)
                if where < 0:
                    continue
                ctx.grid_visited += 1
                for cid in overlay.grid_cells((r, c)):
                    if cid not in child_of or cid not in parent_of:
                        continue
                    if where > 0:
                        visit(cid, 1.0)
                        continue
                    ctx.tick()
                    frac = _cell_fraction(cells[cid], qr, eps)
                    if frac <= 0.0:
                        continue
                    visit(cid, frac if mode == "exact" else 1.0)
    return {k: math.fsum(v) for k, v in acc.items()}


# ---------------------------------------------------------------------------
# Output


def result_csv(result: AggResult, key_names: Sequence[str] = ("group",)) -> str:
    """CSV with group keys, the aggregate value and the exactness flag."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    label = result.agg.kind if not result.agg.measure else f"{result.agg.kind}({result.agg.measure})"
    w.writerow([*key_names, label, "exact"])
    for k in sorted(result.values, key=lambda x: (x is None, str(x))):
        keys = list(k) if isinstance(k, tuple) else [("" if k is None else k)]
        keys += [""] * (len(key_names) - len(keys))
        v = result.values[k]
        w.writerow([*keys, repr(float(v)) if isinstance(v, float) else v, str(result.exact.get(k, True)).lower()])
    return buf.getvalue()


def pairs_csv(pairs: Iterable[tuple[int, int]], names: Sequence[str] = ("a", "b")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for p in sorted(pairs):
        w.writerow(p)
    return buf.getvalue()


def geometry_in_region(g, qr: QueryRegion, eps: float) -> bool:
    """Helper used by baselines: closed intersection of a geometry with qr."""
    from .naive import intersects
    from .geom import EpsilonConfig

    cfg = EpsilonConfig(point_eps=eps)
    return any(intersects(g, p, cfg) for p in qr.polygons)


__all__ = [
    "AGG_KINDS",
    "AggResult",
    "Aggregator",
    "QueryContext",
    "QueryRegion",
    "RegionIds",
    "RegionReport",
    "current_context",
    "decide_summability",
    "eval_in_query_region",
    "eval_summable",
    "pairs_csv",
    "parse_sublevel",
    "predicate_eval_counter",
    "region_contains",
    "region_intersection",
    "reset_counter",
    "result_csv",
    "rollup_map",
    "shared_measure",
]
