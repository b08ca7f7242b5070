import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point
from shapely.geometry import Polygon as SPolygon

from oracles import intersects_at, rand_map

from piet import baseline
from piet.baseline import Entry, Mbr, RTree
from piet.errors import UnsupportedAggregateError
from piet.geom import Polygon

coord = st.floats(0, 100, allow_nan=False)
rect = st.tuples(coord, coord, st.floats(0, 10), st.floats(0, 10)).map(lambda t: Mbr(t[0], t[1], t[0] + t[2], t[1] + t[3]))
entries = st.lists(rect, max_size=120).map(lambda rs: [Entry(i, r, None, float(i % 7)) for i, r in enumerate(rs)])


def test_mbr():
    a = Mbr(0, 0, 2, 2)
    assert a.area == 4 and a.center == (1, 1)
    assert a.intersects(Mbr(2, 2, 3, 3)) and not a.intersects(Mbr(2.1, 0, 3, 1))
    assert Mbr(0.5, 0.5, 1, 1).within(a)
    assert a.enlargement(Mbr(3, 0, 4, 1)) == 4
    assert Mbr.of((1, 2)) == Mbr(1, 2, 1, 2)
    with pytest.raises(ValueError):
        Mbr(1, 0, 0, 1)


def test_small_trees():
    assert baseline.build([]).height == -1 and len(baseline.build([])) == 0
    t = baseline.build([Entry(0, Mbr(0, 0, 1, 1))])
    assert t.height == 0 and len(t) == 1
    with pytest.raises(ValueError):
        baseline.build([], fanout=3)


@settings(max_examples=60, deadline=None)
@given(entries, st.sampled_from([4, 5, 16]))
def test_bulk_load_invariants(es, fanout):
    t = baseline.build(es, fanout)
    assert baseline.check_invariants(t) == []
    assert len(t) == len(es)
    if es:
        assert sum(t.level_sizes()[-1:]) == len(t.leaves())
        assert t.height == len(t.level_sizes()) - 1


@settings(max_examples=40, deadline=None)
@given(entries)
def test_insert_invariants(es):
    t = RTree(None, 4)
    for e in es:
        t.insert(e)
    assert baseline.check_invariants(t) == []
    assert len(t) == len(es)
    assert sorted(e.id for n in t.leaves() for e in n.children) == [e.id for e in es]


@settings(max_examples=60, deadline=None)
@given(entries, rect)
def test_range_query_matches_brute_force(es, q):
    t = baseline.build(es, 4)
    assert baseline.range_query(t, q) == sorted(e.id for e in es if e.mbr.intersects(q))
    odd = baseline.range_query(t, q, lambda e: e.id % 2 == 1)
    assert odd == sorted(e.id for e in es if e.mbr.intersects(q) and e.id % 2 == 1)


def test_range_query_empty():
    assert baseline.range_query(baseline.build([]), Mbr(0, 0, 1, 1)) == []


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["Point", "LineString", "Polygon"]))
def test_spatial_join_matches_oracle(seed, sublevel):
    from piet import naive

    layers = [l for l in rand_map(seed) if l.kinds != {"point"}]
    la, lb = layers[0], layers[-1]
    ta = baseline.build_from_geometries(la.geometries.values(), 4)
    tb = baseline.build_from_geometries(lb.geometries.values(), 4)
    stats = baseline.Stats()
    got = baseline.spatial_join(ta, tb, lambda a, b: naive.intersects_at(a, b, sublevel), stats)
    want = {(a.gid, b.gid) for a in la for b in lb if intersects_at(a, b, sublevel)}
    assert got == want
    assert stats.predicates <= len(la) * len(lb)


def _region(rng):
    cx, cy = rng.uniform(20, 80), rng.uniform(20, 80)
    n = rng.randint(3, 6)
    angs = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
    r = rng.uniform(10, 40)
    return Polygon(0, [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angs])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_ar_aggregate_matches_brute_force(seed):
    rng = random.Random(seed)
    pts = [(rng.uniform(0, 100), rng.uniform(0, 100)) for _ in range(rng.randint(0, 300))]
    es = [Entry(i, Mbr.of(p), None, float(rng.randint(-5, 50))) for i, p in enumerate(pts)]
    t = baseline.build(es, 8)
    for region in (_region(rng), Mbr(rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(50, 100), rng.uniform(50, 100))):
        if isinstance(region, Mbr):
            shp = SPolygon([(region.xmin, region.ymin), (region.xmax, region.ymin), (region.xmax, region.ymax), (region.xmin, region.ymax)])
        else:
            shp = SPolygon(region.vertices)
        inside = [e.value for e, p in zip(es, pts) if shp.covers(Point(p))]
        stats = baseline.Stats()
        assert baseline.ar_aggregate(t, region, "count", stats) == len(inside)
        assert baseline.pruning_violations(t, region, stats.trace) == []
        assert baseline.ar_aggregate(t, region, "sum") == pytest.approx(math.fsum(inside), abs=1e-9)
        assert baseline.ar_aggregate(t, region, "max") == (max(inside) if inside else None)


def test_ar_aggregate_prunes_at_root():
    es = [Entry(i, Mbr.of((i, i)), None, 1.0) for i in range(100)]
    t = baseline.build(es, 4)
    stats = baseline.Stats()
    assert baseline.ar_aggregate(t, Mbr(-1, -1, 200, 200), "sum", stats) == 100.0
    assert stats.visits == 1 and stats.predicates == 0
    with pytest.raises(UnsupportedAggregateError):
        baseline.ar_aggregate(t, Mbr(0, 0, 1, 1), "avg")
    assert baseline.ar_aggregate(baseline.build([]), Mbr(0, 0, 1, 1), "count") == 0
