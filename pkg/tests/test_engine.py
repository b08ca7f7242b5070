import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import box as sbox

from oracles import rand_map, shape

from piet.engine import (
    Aggregator,
    QueryContext,
    QueryRegion,
    RegionIds,
    decide_summability,
    eval_in_query_region,
    eval_summable,
    pairs_csv,
    parse_sublevel,
    region_contains,
    region_intersection,
    result_csv,
    rollup_map,
    shared_measure,
)
from piet.errors import MissingCombinationError, QueryError, UnknownGeometryError, UnsupportedAggregateError
from piet.geom import BBox, Polygon, Polyline
from piet.layer import Layer
from piet.subdivision import CellKind, GridSpec, build_overlay

BOX = BBox(-3, -3, 13, 13)


@pytest.fixture(scope="module")
def single():
    lay = Layer("Ls")
    lay.add(Polygon(0, [(2, 2), (6, 2), (6, 6), (2, 6)]), {"pop": 1000})
    return build_overlay([lay], box=BBox(0, 0, 10, 10), grid=GridSpec(2, 2))


@pytest.mark.parametrize(
    "expr",
    ["__import__('os')", "pop.real", "pop[0]", "f(pop)", "pop ** 2", "lambda: 1", "True", "'x'", "pop if pop else 1", "1 +"],
)
def test_measure_parser_rejects(expr):
    with pytest.raises((QueryError, UnsupportedAggregateError)):
        Aggregator("sum", expr)


def test_aggregator_validation():
    assert Aggregator("SUM", "pop").kind == "sum"
    with pytest.raises(UnsupportedAggregateError):
        Aggregator("median", "pop")
    with pytest.raises(UnsupportedAggregateError):
        Aggregator("avg")
    assert Aggregator("count").evaluator()({}) == 1.0
    h = Aggregator("sum", "-pop / 2 + 3 * w").evaluator()
    assert h({"pop": 4, "w": 1}) == 1.0
    assert h({"pop": 4}) is None
    assert Aggregator("sum", "pop / w").evaluator()({"pop": 1, "w": 0}) is None


def test_sublevels():
    assert parse_sublevel("SubPLevel.Polygon") is CellKind.POLYGON
    assert parse_sublevel("linestring") is CellKind.LINE
    assert parse_sublevel(CellKind.NODE) is CellKind.NODE
    with pytest.raises(QueryError):
        parse_sublevel("volume")


def test_single_polygon(single):
    r = RegionIds.of(single, "Ls", [0])
    assert r.level == "polygon"
    assert eval_summable(single, r, Aggregator("count")).scalar == 1
    assert eval_summable(single, r, Aggregator("sum", "pop")).scalar == 1000.0
    assert eval_summable(single, r, Aggregator("avg", "pop")).scalar == 1000.0
    assert eval_summable(single, r, Aggregator("area")).scalar == pytest.approx(16.0)


def test_empty_selection(single):
    r = RegionIds.of(single, "Ls", [])
    assert eval_summable(single, r, Aggregator("count")).scalar == 0
    assert eval_summable(single, r, Aggregator("sum", "pop")).scalar is None
    assert eval_summable(single, r, Aggregator("avg", "pop")).scalar is None


def test_region_ids_errors(single):
    with pytest.raises(QueryError):
        RegionIds.of(single, "Lr", [0])
    with pytest.raises(UnknownGeometryError):
        RegionIds.of(single, "Ls", [5])
    with pytest.raises(MissingCombinationError):
        region_intersection(single, "Ls", "Lr")
    a = RegionIds.of(single, "Ls", [0])
    assert a.union(RegionIds.of(single, "Ls", [])).ids == {0}
    with pytest.raises(QueryError):
        a.union(RegionIds("Lr", "polyline", frozenset()))


def test_missing_measures_are_skipped():
    lay = Layer("L")
    lay.add(Polygon(0, [(0, 0), (1, 0), (1, 1)]), {"pop": 5})
    lay.add(Polygon(1, [(2, 0), (3, 0), (3, 1)]))
    ov = build_overlay([lay], box=BBox(-1, -1, 4, 2))
    ctx = QueryContext()
    res = eval_summable(ov, RegionIds.of(ov, "L", [0, 1]), Aggregator("sum", "pop"), ctx=ctx)
    assert res.scalar == 5.0 and res.skipped == 1
    assert ctx.warnings


def test_decide_summability(single):
    assert decide_summability([], single)
    ext = single.ext("Ls", 0)
    assert decide_summability(ext, single)
    assert not decide_summability(set(ext) - {min(ext)}, single)
    assert not decide_summability(set(ext) | set(single.orphans()[:1]), single)


def test_region_covering_box_equals_summable():
    layers = rand_map(8)
    ov = build_overlay(layers, box=BOX, grid=GridSpec(3, 3))
    qr = QueryRegion.box(BOX.xmin, BOX.ymin, BOX.xmax, BOX.ymax)
    for lay in layers:
        ids = RegionIds.of(ov, lay.name, lay.geometries)
        for agg in (Aggregator("count"), Aggregator("sum", "v"), Aggregator("max", "w")):
            ctx = QueryContext()
            got = eval_in_query_region(ov, qr, lay.name, agg, ctx=ctx)
            assert got.values == eval_summable(ov, ids, agg).values
            # every grid rectangle lies inside the region: no predicate runs
            assert ctx.predicates == 0
            assert got.report.grid_inside == 9


def test_counter_tracks_boundary_cells(single):
    inside = QueryRegion.box(0, 0, 10, 10)
    ctx = QueryContext()
    res = eval_in_query_region(single, inside, "Ls", Aggregator("area"), mode="exact", ctx=ctx)
    assert ctx.predicates == 0 and res.report.boundary_cells == 0
    crossing = QueryRegion.box(1, 1, 4, 4)
    ctx = QueryContext()
    res = eval_in_query_region(single, crossing, "Ls", Aggregator("area"), mode="exact", ctx=ctx)
    assert ctx.predicates > 0 and res.report.boundary_cells > 0
    assert res.scalar == pytest.approx(4.0)
    fast = eval_in_query_region(single, crossing, "Ls", Aggregator("area"), mode="fast")
    assert fast.exact[None] is False and fast.scalar >= 4.0
    with pytest.raises(QueryError):
        eval_in_query_region(single, crossing, "Ls", Aggregator("area"), mode="approx")
    with pytest.raises(UnsupportedAggregateError):
        eval_in_query_region(single, crossing, "Ls", Aggregator("length"))


def test_rollup_map():
    states = Layer("Ls")
    states.add(Polygon(0, [(0, 0), (5, 0), (5, 5), (0, 5)]))
    states.add(Polygon(1, [(5, 0), (10, 0), (10, 5), (5, 5)]))
    cities = Layer("Lc")
    cities.add(Polygon(0, [(1, 1), (2, 1), (2, 2), (1, 2)]))
    cities.add(Polygon(1, [(6, 1), (7, 1), (7, 2), (6, 2)]))
    cities.add(Polygon(2, [(4, 3), (6, 3), (6, 4), (4, 4)]))
    ov = build_overlay([states, cities], box=BBox(-1, -1, 11, 6))
    assert rollup_map(ov, "Lc", "Ls") == {0: frozenset({0}), 1: frozenset({1})}
    res = eval_summable(ov, RegionIds.of(ov, "Lc", [0, 1, 2]), Aggregator("count"), group_by=rollup_map(ov, "Lc", "Ls"))
    assert res.values == {0: 1, 1: 1}
    assert region_intersection(ov, "Ls", "Lc", "Polygon") == {(0, 0), (1, 1), (0, 2), (1, 2)}
    assert region_contains(ov, "Ls", "Lc", "Polygon", a_ids=[1]) == {(1, 1)}


def test_shared_measure():
    states = Layer("Ls")
    states.add(Polygon(0, [(0, 0), (5, 0), (5, 5), (0, 5)]))
    states.add(Polygon(1, [(5, 0), (10, 0), (10, 5), (5, 5)]))
    rivers = Layer("Lr")
    rivers.add(Polyline(0, [(1, 2), (9, 2)]))
    ov = build_overlay([states, rivers], box=BBox(-1, -1, 11, 6))
    got = shared_measure(ov, "Lr", "Ls")
    assert got == pytest.approx({(0, 0): 4.0, (1, 0): 4.0})
    clipped = shared_measure(ov, "Lr", "Ls", qr=QueryRegion.box(3, 0, 6, 5))
    assert clipped == pytest.approx({(0, 0): 2.0, (1, 0): 1.0})
    with pytest.raises(UnsupportedAggregateError):
        shared_measure(ov, "Lr", "Ls", kind="volume")


def test_csv_output(single):
    res = eval_summable(single, RegionIds.of(single, "Ls", [0]), Aggregator("sum", "pop"), group_by="gid")
    assert result_csv(res, ["state"]) == "state,sum(pop),exact\n0,1000.0,true\n"
    assert pairs_csv({(2, 1), (0, 3)}) == "a,b\n0,3\n2,1\n"


@settings(max_examples=30, deadline=None)
@given(
    st.integers(0, 10_000),
    st.tuples(st.floats(-2, 8), st.floats(-2, 8), st.floats(1, 6), st.floats(1, 6)),
    st.sampled_from([GridSpec(1, 1), GridSpec(3, 3), GridSpec(4, 2)]),
)
def test_exact_region_measures_match_shapely(seed, rect, grid):
    x, y, w, h = rect
    qr = QueryRegion.box(x, y, x + w, y + h)
    clip = sbox(x, y, x + w, y + h)
    layers = rand_map(seed)
    ov = build_overlay(layers, box=BOX, grid=grid)
    for lay in layers:
        kinds = lay.kinds
        if kinds == {"polyline"}:
            agg, size = Aggregator("length"), lambda s: s.length
        elif kinds == {"polygon"}:
            agg, size = Aggregator("area"), lambda s: s.area
        else:
            continue
        got = eval_in_query_region(ov, qr, lay.name, agg, mode="exact", group_by="gid")
        for g in lay:
            want = size(shape(g).intersection(clip))
            assert got.values.get(g.gid, 0.0) == pytest.approx(want, abs=1e-7)
        # fast mode never undercounts
        fast = eval_in_query_region(ov, qr, lay.name, agg, mode="fast", group_by="gid")
        for k, v in got.values.items():
            assert fast.values[k] >= v - 1e-9
            if fast.exact[k]:
                assert fast.values[k] == pytest.approx(v, abs=1e-9)
