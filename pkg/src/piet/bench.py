"""Benchmark queries Q1 to Q12 in every evaluation mode.

Each query is answered by the overlay engine (``piet``), by an R-tree
filter plus exact predicates (``rtree``), by a nested loop (``naive``) and,
for the aggregation-tree suite, by an aR-tree (``artree``). Results are
normalized so the modes can be compared; timings are wall clock with a
warm-up run excluded.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from . import baseline, engine, naive
from .dims import PietSchema
from .geom import BBox, Polygon
from .gisolapql.gis import LayerRef, MemberRef, Op, parse_gis
from .gisolapql.planner import execute_gis, op_pairs, plan_gis
from .layer import Layer
from .subdivision import CellKind, GridSpec, Overlay, build_overlay
from .synth import CITIES, RIVERS, STATES, VOLCANOES, MapSpec, default_schema, generate

MODES = ("piet", "rtree", "naive")
SUITES = {
    "geometric": ("Q1", "Q2", "Q3", "Q4"),
    "aggregation": ("Q5", "Q6", "Q7", "Q8"),
    "region": ("Q9", "Q10", "Q11"),
    "artree": ("Q6", "Q12"),
}
BENCH_LAYERS = (STATES, RIVERS, CITIES, VOLCANOES)


@dataclass
class Workspace:
    overlay: Overlay
    schema: PietSchema
    regions: dict[str, engine.QueryRegion] = field(default_factory=dict)
    hot: float = 4300.0  # elevation threshold of Q8 and Q11
    min_rivers: int = 3  # Q4 threshold
    focus_state: int = 0  # the state of Q5 and Q12

    @property
    def layers(self) -> Mapping[str, Layer]:
        return self.overlay.layers

    @classmethod
    def synthetic(cls, spec: MapSpec, grid: GridSpec = GridSpec(10, 10), n_jobs: int = 1) -> "Workspace":
        layers = generate(spec)
        chosen = [layers[n] for n in BENCH_LAYERS]
        ov = build_overlay(chosen, box=spec.box, grid=grid, n_jobs=n_jobs)
        ws = cls(ov, default_schema({l.name: l for l in chosen}, warehouse=None))
        ws.regions = default_regions(ov.box)
        ws.regions["Q12"] = focus_region(ov.layers[STATES][ws.focus_state])
        return ws

    @classmethod
    def from_overlay(cls, ov: Overlay, schema: PietSchema | None = None) -> "Workspace":
        ws = cls(ov, schema or default_schema(ov.layers, warehouse=None))
        ws.regions = default_regions(ov.box)
        if STATES in ov.layers and ws.focus_state in ov.layers[STATES]:
            ws.regions["Q12"] = focus_region(ov.layers[STATES][ws.focus_state])
        return ws

    def rtree(self, layer: str, values: str | None = None) -> baseline.RTree:
        cache = self.overlay.index.setdefault("rtree_values", {})
        key = (layer, values)
        if key not in cache:
            lay = self.layers[layer]
            vals = None if values is None else {g: float(lay.attr(g, values, 0.0)) for g in lay.geometries}
            cache[key] = baseline.build_from_geometries(lay.geometries.values(), values=vals)
        return cache[key]


def default_regions(box: BBox) -> dict[str, engine.QueryRegion]:
    """A small and a large query region, both leaning west."""
    w, h = box.xmax - box.xmin, box.ymax - box.ymin

    def rel(x0, y0, x1, y1, name):
        r = engine.QueryRegion.box(box.xmin + x0 * w, box.ymin + y0 * h, box.xmin + x1 * w, box.ymin + y1 * h)
        return engine.QueryRegion(r.polygons, name)

    return {"small": rel(0.1, 0.2, 0.35, 0.5, "small"), "large": rel(0.05, 0.1, 0.65, 0.9, "large")}


def focus_region(state: Polygon, shrink: float = 0.2) -> engine.QueryRegion:
    """An axis-aligned box strictly inside a convex state."""
    xs = sorted({p[0] for p in state.vertices})
    x0, x1 = xs[0], xs[-1]
    # the largest horizontal band common to both vertical sides
    lo = max(min(p[1] for p in state.vertices if p[0] == x) for x in (x0, x1))
    hi = min(max(p[1] for p in state.vertices if p[0] == x) for x in (x0, x1))
    dx, dy = (x1 - x0) * shrink, (hi - lo) * shrink
    r = engine.QueryRegion.box(x0 + dx, lo + dy, x1 - dx, hi - dy)
    return engine.QueryRegion(r.polygons, "Q12")


# ---------------------------------------------------------------------------
# Shared pieces


def _gis(ws: Workspace, text: str, mode: str, ctx) -> list[tuple]:
    return execute_gis(plan_gis(parse_gis(text), ws.schema), ws.overlay, ws.schema, ctx, mode).rows


def _pairs(ws: Workspace, name: str, a, b, sublevel: str, mode: str, ctx) -> set[tuple[int, int]]:
    a = MemberRef(*a) if isinstance(a, tuple) else LayerRef(a)
    b = MemberRef(*b) if isinstance(b, tuple) else LayerRef(b)
    return op_pairs(ws.overlay, Op(name, a, b, sublevel), mode, ctx)


def _elev(ws: Workspace, v: int) -> float:
    return float(ws.layers[VOLCANOES].attr(v, "elevation", 0.0))


def _hot_states(ws: Workspace, mode: str, ctx) -> set[int]:
    pairs = _pairs(ws, "contains", STATES, VOLCANOES, "Point", mode, ctx)
    return {s for s, v in pairs if _elev(ws, v) > ws.hot}


def _avg_by(groups: Mapping[int, list[float]]) -> dict[int, float]:
    return {k: math.fsum(v) / len(v) for k, v in groups.items() if v}


def _volcanoes_in_region(ws: Workspace, qr: engine.QueryRegion, mode: str, ctx) -> set[int]:
    lay = ws.layers[VOLCANOES]
    eps = ws.overlay.eps
    if mode == "piet":
        res = engine.eval_in_query_region(ws.overlay, qr, VOLCANOES, engine.Aggregator("count"), group_by="gid", ctx=ctx)
        return set(res.values)
    if mode == "naive":
        ctx.tick(len(lay))
        return {g for g in lay.geometries if naive.in_region(lay[g], qr.polygons, eps)}
    stats = baseline.Stats()
    ids = baseline.range_query(
        ws.rtree(VOLCANOES), baseline.Mbr.of(qr.bbox()), lambda e: naive.in_region(e.obj, qr.polygons, eps), stats
    )
    ctx.tick(stats.predicates)
    return set(ids)


# ---------------------------------------------------------------------------
# Queries


def q1(ws, mode, ctx, region=None):
    """States containing at least one volcano."""
    rows = _gis(ws, f"SELECT layer.{STATES}; FROM Piet-Schema; "
                    f"WHERE contains(layer.{STATES}, layer.{VOLCANOES}, subplevel.Point);", mode, ctx)
    return frozenset(rows)


def q2(ws, mode, ctx, region=None):
    """States and the cities within them."""
    rows = _gis(ws, f"SELECT layer.{STATES}, layer.{CITIES}; FROM Piet-Schema; "
                    f"WHERE contains(layer.{STATES}, layer.{CITIES}, subplevel.Point);", mode, ctx)
    return frozenset(rows)


def q3(ws, mode, ctx, region=None):
    """Q2 restricted to states crossed by a river."""
    rows = _gis(ws, f"SELECT layer.{STATES}, layer.{CITIES}; FROM Piet-Schema; "
                    f"WHERE contains(layer.{STATES}, layer.{CITIES}, subplevel.Point) and "
                    f"intersection(layer.{STATES}, layer.{RIVERS}, subplevel.LineString);", mode, ctx)
    return frozenset(rows)


def q4(ws, mode, ctx, region=None):
    """States crossed by at least ``min_rivers`` rivers."""
    rows = _gis(ws, f"SELECT layer.{STATES}, layer.{RIVERS}; FROM Piet-Schema; "
                    f"WHERE intersection(layer.{STATES}, layer.{RIVERS}, subplevel.LineString);", mode, ctx)
    n = defaultdict(int)
    for s, _ in rows:
        n[s] += 1
    return frozenset(s for s, k in n.items() if k >= ws.min_rivers)


def q5(ws, mode, ctx, region=None):
    """Rivers and volcanoes inside the focus state, counted."""
    s = ws.focus_state
    rivers = {r for _, r in _pairs(ws, "contains", (STATES, s), RIVERS, "LineString", mode, ctx)}
    volcanoes = {v for _, v in _pairs(ws, "contains", (STATES, s), VOLCANOES, "Point", mode, ctx)}
    return (len(rivers), len(volcanoes))


def q6(ws, mode, ctx, region=None):
    """Average volcano elevation by state."""
    if mode == "artree":
        return _q6_artree(ws, ctx)
    rows = _gis(ws, f"SELECT layer.{STATES}, measure.AvgElevation; FROM Piet-Schema; "
                    f"WHERE contains(layer.{STATES}, layer.{VOLCANOES}, subplevel.Point);", mode, ctx)
    return {s: v for s, v in rows if v is not None}


def _q6_artree(ws, ctx):
    t = ws.rtree(VOLCANOES, "elevation")
    out = {}
    stats = baseline.Stats()
    for s, g in sorted(ws.layers[STATES].geometries.items()):
        n = baseline.ar_aggregate(t, g, "count", stats)
        if n:
            out[s] = baseline.ar_aggregate(t, g, "sum", stats) / n
    ctx.tick(stats.predicates)
    return out


def q7(ws, mode, ctx, region=None):
    """Q6 restricted to states crossed by a river."""
    rows = _gis(ws, f"SELECT layer.{STATES}, measure.AvgElevation; FROM Piet-Schema; "
                    f"WHERE contains(layer.{STATES}, layer.{VOLCANOES}, subplevel.Point) and "
                    f"intersection(layer.{STATES}, layer.{RIVERS}, subplevel.LineString);", mode, ctx)
    return {s: v for s, v in rows if v is not None}


def q8(ws, mode, ctx, region=None):
    """Length of each river inside states holding a volcano above ``hot``."""
    hot = _hot_states(ws, mode, ctx)
    ov = ws.overlay
    rivers = ws.layers[RIVERS]
    out = {}
    if mode == "piet":
        inside = set()
        for s in hot:
            inside |= ov.cells_of(STATES, s, CellKind.LINE)
        for r in sorted(rivers.geometries):
            cells = ov.cells_of(RIVERS, r, CellKind.LINE) & inside
            if cells:
                out[r] = math.fsum(ov.cells[c].length for c in cells)
        return out
    states = ws.layers[STATES]
    polys = [states[s] for s in sorted(hot)]
    if mode == "naive":
        cand = {r: polys for r in rivers.geometries}
        ctx.tick(len(rivers) * len(polys))
    else:
        pairs = _pairs(ws, "intersection", STATES, RIVERS, "LineString", "rtree", ctx)
        by = defaultdict(list)
        for s, r in sorted(pairs):
            if s in hot:
                by[r].append(states[s])
        cand = by
    for r, ps in cand.items():
        if ps:
            v = naive.length_inside_all(rivers[r], ps, eps=ov.eps)
            if v > 10 * ov.eps.point_eps:
                out[r] = v
    return out


def q9(ws, mode, ctx, region):
    """Average volcano elevation by state, for volcanoes in the region."""
    return _region_avg(ws, mode, ctx, region, only_river_states=False)


def q10(ws, mode, ctx, region):
    """Q9 restricted to states crossed by a river."""
    return _region_avg(ws, mode, ctx, region, only_river_states=True)


def _region_avg(ws, mode, ctx, region, only_river_states):
    qr = ws.regions[region]
    if mode == "piet":
        parents = engine.rollup_map(ws.overlay, VOLCANOES, STATES, "Point")
        res = engine.eval_in_query_region(
            ws.overlay, qr, VOLCANOES, engine.Aggregator("avg", "elevation"), group_by=parents, ctx=ctx
        )
        out = dict(res.values)
    else:
        inside = _volcanoes_in_region(ws, qr, mode, ctx)
        states = ws.layers[STATES]
        volc = ws.layers[VOLCANOES]
        eps = ws.overlay.eps
        groups = defaultdict(list)
        for v in sorted(inside):
            if mode == "naive":
                ctx.tick(len(states))
                hits = [s for s in states.geometries if naive.contains(states[s], volc[v], eps)]
            else:
                stats = baseline.Stats()
                hits = baseline.range_query(
                    ws.rtree(STATES), baseline.Mbr.of(volc[v]), lambda e: naive.contains(e.obj, volc[v], eps), stats
                )
                ctx.tick(stats.predicates)
            for s in hits:
                groups[s].append(_elev(ws, v))
        out = _avg_by(groups)
    if only_river_states:
        crossed = {s for s, _ in _pairs(ws, "intersection", STATES, RIVERS, "LineString", mode, ctx)}
        out = {s: v for s, v in out.items() if s in crossed}
    return out


def q11(ws, mode, ctx, region):
    """Per hot state, river length inside both the state and the region."""
    qr = ws.regions[region]
    hot = _hot_states(ws, mode, ctx)
    ov = ws.overlay
    if mode == "piet":
        per = engine.shared_measure(ov, RIVERS, STATES, "length", parent_ids=hot, qr=qr, mode="exact", ctx=ctx)
        acc = defaultdict(list)
        for (s, _), v in per.items():
            acc[s].append(v)
        out = {s: math.fsum(v) for s, v in acc.items()}
        return {s: v for s, v in out.items() if v > 10 * ov.eps.point_eps}
    states, rivers = ws.layers[STATES], ws.layers[RIVERS]
    out = {}
    qbox = baseline.Mbr.of(qr.bbox())
    for s in sorted(hot):
        if mode == "naive":
            cand = sorted(rivers.geometries)
            ctx.tick(len(cand))
        else:
            sb = baseline.Mbr.of(states[s])
            if not sb.intersects(qbox):
                continue
            stats = baseline.Stats()
            cand = baseline.range_query(ws.rtree(RIVERS), sb, None, stats)
            cand = [r for r in cand if baseline.Mbr.of(rivers[r]).intersects(qbox)]
            ctx.tick(len(cand))
        v = math.fsum(naive.length_inside_all(rivers[r], [states[s]], qr.polygons, eps=ov.eps) for r in cand)
        if v > 10 * ov.eps.point_eps:
            out[s] = v
    return out


def q12(ws, mode, ctx, region=None):
    """Highest volcano inside a query region lying in the focus state."""
    qr = ws.regions["Q12"]
    if mode == "artree":
        stats = baseline.Stats()
        best = baseline.ar_aggregate(ws.rtree(VOLCANOES, "elevation"), qr.polygons[0], "max", stats)
        ctx.tick(stats.predicates)
        return best
    inside_state = {v for _, v in _pairs(ws, "contains", (STATES, ws.focus_state), VOLCANOES, "Point", mode, ctx)}
    if mode == "piet":
        res = engine.eval_in_query_region(
            ws.overlay, qr, VOLCANOES, engine.Aggregator("max", "elevation"), ids=inside_state, ctx=ctx
        )
        return res.scalar
    vals = [_elev(ws, v) for v in _volcanoes_in_region(ws, qr, mode, ctx) if v in inside_state]
    return max(vals) if vals else None


QUERIES: dict[str, Callable] = {
    "Q1": q1, "Q2": q2, "Q3": q3, "Q4": q4, "Q5": q5, "Q6": q6,
    "Q7": q7, "Q8": q8, "Q9": q9, "Q10": q10, "Q11": q11, "Q12": q12,
}


def same(a, b, rel: float = 1e-9) -> bool:
    """Mode agreement: equal sets, or equal keys with values within ``rel``."""
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(same(a[k], b[k], rel) for k in a)
    if isinstance(a, float) or isinstance(b, float):
        if a is None or b is None:
            return a is b
        return math.isclose(a, b, rel_tol=rel, abs_tol=1e-12)
    if isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b):
        return all(same(x, y, rel) for x, y in zip(a, b))
    return a == b


# ---------------------------------------------------------------------------
# Harness


@dataclass
class Timing:
    suite: str
    query: str
    region: str
    mode: str
    runs: list[float]
    predicates: int
    size: int
    agrees: Optional[bool]

    def row(self) -> dict:
        return {
            "suite": self.suite,
            "query": self.query,
            "region": self.region,
            "mode": self.mode,
            "repeats": len(self.runs),
            "mean_ms": round(statistics.fmean(self.runs), 4),
            "min_ms": round(min(self.runs), 4),
            "max_ms": round(max(self.runs), 4),
            "predicates": self.predicates,
            "result_size": self.size,
            "agrees_with_naive": "" if self.agrees is None else str(self.agrees).lower(),
        }


FIELDS = (
    "suite", "query", "region", "mode", "repeats", "mean_ms", "min_ms", "max_ms",
    "predicates", "result_size", "agrees_with_naive",
)


def _size(res) -> int:
    if res is None:
        return 0
    if isinstance(res, (set, frozenset, dict)):
        return len(res)
    return 1


def time_query(ws: Workspace, qid: str, mode: str, region: str | None = None, repeats: int = 10):
    """Run once to warm up, then ``repeats`` timed runs; returns (result, ms list, predicates)."""
    fn = QUERIES[qid]
    fn(ws, mode, engine.QueryContext(), region)
    runs = []
    res, preds = None, 0
    for _ in range(max(1, repeats)):
        ctx = engine.QueryContext()
        t0 = time.perf_counter()
        res = fn(ws, mode, ctx, region)
        runs.append((time.perf_counter() - t0) * 1e3)
        preds = ctx.predicates
    return res, runs, preds


def run_suite(ws: Workspace, suite: str, repeats: int = 10, modes: Sequence[str] | None = None) -> list[Timing]:
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
    out = []
    for qid in SUITES[suite]:
        qmodes = list(modes or MODES)
        if suite == "artree" and "artree" not in qmodes:
            qmodes.append("artree")
        regions = [r for r in ws.regions if r != "Q12"] if suite == "region" else [""]
        for region in regions:
            results = {}
            for mode in qmodes:
                res, runs, preds = time_query(ws, qid, mode, region or None, repeats)
                results[mode] = res
                out.append(Timing(suite, qid, region, mode, runs, preds, _size(res), None))
            ref = results.get("naive")
            for t in out[-len(qmodes):]:
                t.agrees = None if ref is None else same(results[t.mode], ref)
    return out


def write_csv(timings: Sequence[Timing], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=FIELDS, lineterminator="\n")
        w.writeheader()
        for t in timings:
            w.writerow(t.row())
    return path
