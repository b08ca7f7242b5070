"""Acceptance criteria 1-10, one test each, one PASS/FAIL line each."""

import itertools
import math
import random
import time
from collections import Counter

import pytest
from shapely.geometry import LineString
from shapely.geometry import Polygon as SPolygon
from shapely.ops import unary_union

from oracles import arrangement_counts, covers, intersects_at, join, rand_lines, rand_map

from piet import baseline, engine, store, synth, topo
from piet.bench import Workspace, time_query
from piet.geom import BBox, Line, PointGeom
from piet.gisolapql import (
    Children,
    Crossjoin,
    Hierarchize,
    Member,
    SetExpr,
    Session,
    TupleExpr,
    Union,
    eval_mdx,
    parse,
    parse_mdx,
    print_query,
)
from piet.subdivision import GridSpec, arrangement, build_overlay, csp

BOX = BBox(-3, -3, 13, 13)
SUBLEVEL = {"point": "Point", "polyline": "LineString", "polygon": "Polygon"}


def test_criterion_01_arrangement_counts(criterion):
    rng = random.Random(2024)
    box = (0, 0, 10, 10)
    bad, worst = [], 0
    t0 = time.perf_counter()
    for k in range(200):
        n = rng.randint(1, 12)
        lines = rand_lines(rng, n)
        arr, _ = arrangement([Line.from_coeffs(*l) for l in lines], BBox(*box), 1e-9)
        got = arr.counts()
        elapsed = time.perf_counter() - t0
        want = arrangement_counts(lines, box)
        t0 = time.perf_counter() - elapsed  # the oracle is not timed
        v, e, f = got
        if got != want or v > n * (n - 1) // 2 or e > n * n or f > n * n / 2 + n / 2 + 1:
            bad.append((k, n, got, want))
        worst = max(worst, n)
    elapsed = time.perf_counter() - t0
    criterion(1, not bad and elapsed < 5.0, f"200 line sets (N<={worst}), {len(bad)} mismatches, {elapsed:.2f}s")


def _cell_key(c):
    pts = tuple(c.coords)
    if c.kind.value == "polygon":
        i = pts.index(min(pts))
        pts = pts[i:] + pts[:i]
    elif c.kind.value == "line":
        pts = tuple(sorted(pts))
    return c.kind.value, pts


def test_criterion_02_csp_permutation_invariance(criterion):
    bad = []
    perms = 0
    for seed in range(50):
        layers = rand_map(1000 + seed, max_per_layer=4)
        ref = None
        for order in itertools.permutations(layers):
            cells = Counter(_cell_key(c) for c in csp(order, box=BOX))
            perms += 1
            if ref is None:
                ref = cells
            elif cells != ref:
                bad.append(seed)
                break
    criterion(2, not bad, f"50 maps, {perms} layer orders, {len(bad)} differing multisets")


def test_criterion_03_oracle_equivalence(criterion):
    bad = []
    ops = 0
    for seed in range(100):
        layers = rand_map(seed)
        assert sum(len(l) for l in layers) <= 30
        ov = build_overlay(layers, box=BOX, grid=GridSpec(2, 3) if seed % 3 == 0 else GridSpec(1, 1))
        for a, b in itertools.product(layers, layers):
            for sl in ("Point", "LineString", "Polygon"):
                ops += 1
                got = engine.region_intersection(ov, a.name, b.name, sl)
                if got != join(a, b, lambda x, y: intersects_at(x, y, sl)):
                    bad.append(("intersection", seed, a.name, b.name, sl))
            ops += 1
            got = engine.region_contains(ov, a.name, b.name, SUBLEVEL[next(iter(b.kinds))])
            if got != join(a, b, covers):
                bad.append(("contains", seed, a.name, b.name))
        # aggregation over the geometries met by the first layer
        host, guest = layers[-1], layers[0]
        pairs = engine.region_intersection(ov, host.name, guest.name, "Point")
        ids = {g for _, g in pairs}
        region = engine.RegionIds.of(ov, guest.name, ids)
        for kind in ("count", "sum", "avg"):
            agg = engine.Aggregator(kind, None if kind == "count" else "v * 2 + w")
            res = engine.eval_summable(ov, region, agg)
            vals = [guest.attributes[g]["v"] * 2 + guest.attributes[g]["w"] for g in ids]
            if kind == "count":
                want = len(vals)
            elif not vals:
                want = None  # SQL semantics: no value over an empty selection
            else:
                want = math.fsum(vals) / (len(vals) if kind == "avg" else 1)
            got = res.scalar
            if want is None:
                ok = got is None
            else:
                ok = got is not None and abs(got - want) <= 1e-9 * max(1.0, abs(want))
            ops += 1
            if not ok:
                bad.append((kind, seed, got, want))
    criterion(3, not bad, f"100 maps, {ops} checks, {len(bad)} mismatches")


def test_criterion_04_precision_pattern(criterion):
    layers = synth.generate(synth.MapSpec(seed=11, states=12, rivers=40, points=20))
    rivers = layers[synth.RIVERS]
    ov = build_overlay([layers[synth.STATES], rivers], box=synth.DEFAULT_BOX, grid=GridSpec(4, 4))
    qr = engine.QueryRegion((synth.Polygon(0, [(18, 9), (71, 14), (64, 49), (23, 44)]),))
    shp = unary_union([SPolygon(p.coords()) for p in qr.polygons])
    agg = engine.Aggregator("length")
    fast = engine.eval_in_query_region(ov, qr, rivers.name, agg, mode="fast", group_by="gid")
    exact = engine.eval_in_query_region(ov, qr, rivers.name, agg, mode="exact", group_by="gid")
    inside = crossing = fast_err = 0
    bad = []
    for g in sorted(rivers.geometries):
        line = LineString(rivers[g].coords())
        truth = line.intersection(shp).length
        if truth == 0.0:
            continue
        crosses = truth < line.length - 1e-9
        inside += not crosses
        crossing += crosses
        f, e = fast.values.get(g, 0.0), exact.values.get(g, 0.0)
        if abs(e - truth) > 1e-7 * truth:
            bad.append(("exact", g, e, truth))
        if abs(f - truth) > 1e-7 * truth:
            if not crosses:
                bad.append(("fast-inside", g, f, truth))
            else:
                fast_err += 1
    ok = not bad and inside > 0 and crossing > 0 and fast_err > 0
    criterion(
        4, ok, f"{inside} inside exact, fast error on {fast_err}/{crossing} crossing rivers only, exact < 1e-7 for all"
    )


def test_criterion_05_purity(criterion):
    ws = Workspace.synthetic(synth.MapSpec(seed=5, states=15, rivers=10, points=60), GridSpec(3, 3))
    counts = {}
    for qid in ("Q1", "Q2", "Q3", "Q4", "Q5", "Q6", "Q7", "Q8"):
        _, _, preds = time_query(ws, qid, "piet", None, 1)
        counts[qid] = preds
    # a full query over the running example
    data = synth.running_example()
    ov = build_overlay([data[synth.STATES], data[synth.STORES], data[synth.CITIES]])
    before = engine.predicate_eval_counter()
    for a, b in itertools.permutations(ov.layers, 2):
        engine.region_intersection(ov, a, b, "Point")
        engine.region_contains(ov, a, b, "Point")
    counts["engine"] = engine.predicate_eval_counter() - before
    sess = Session(ov)
    out = sess.run(f"SELECT layer.{synth.STATES}, layer.{synth.CITIES}; FROM Piet-Schema; "
                   f"WHERE contains(layer.{synth.STATES}, layer.{synth.CITIES}, subplevel.Point) and "
                   f"intersection(layer.{synth.STATES}, layer.{synth.STORES}, subplevel.Point);")
    counts["session"] = out.predicates
    ok = all(v == 0 for v in counts.values())
    criterion(5, ok, f"predicate counter over {len(counts)} piet query groups: {sorted(set(counts.values()))}")


@pytest.mark.slow
def test_criterion_06_relative_performance(criterion):
    spec = synth.MapSpec(seed=7, states=100, rivers=100, points=2400)
    ws = Workspace.synthetic(spec, GridSpec(40, 40))
    n_geoms = sum(len(l) for l in ws.layers.values())
    lines = []
    ok = n_geoms >= 5000
    for qid in ("Q1", "Q3"):
        best = {}
        res = {}
        for mode in ("piet", "rtree", "naive"):
            r, runs, _ = time_query(ws, qid, mode, None, 2)
            best[mode], res[mode] = min(runs), r
        ratio = best["naive"] / best["piet"]
        ok = ok and ratio >= 5.0 and res["piet"] == res["naive"] == res["rtree"]
        lines.append(f"{qid} naive/piet {ratio:.1f}x rtree/piet {best['rtree'] / best['piet']:.1f}x")
    criterion(6, ok, f"{n_geoms} geometries; " + "; ".join(lines))


def test_criterion_07_artree(criterion):
    rng = random.Random(77)
    pts = [PointGeom(i, (rng.random(), rng.random())) for i in range(1000)]
    vals = {i: float(rng.randint(0, 5000)) for i in range(1000)}
    tree = baseline.build_from_geometries(pts, 16, vals)
    bad = []
    for k in range(50):
        x0, x1 = sorted((rng.random(), rng.random()))
        y0, y1 = sorted((rng.random(), rng.random()))
        region = baseline.Mbr(x0, y0, x1, y1)
        inside = [vals[p.gid] for p in pts if x0 <= p.p.x <= x1 and y0 <= p.p.y <= y1]
        want = {"count": len(inside), "sum": math.fsum(inside), "max": max(inside, default=None)}
        for agg in ("count", "sum", "max"):
            st = baseline.Stats()
            got = baseline.ar_aggregate(tree, region, agg, st)
            if got != want[agg]:
                bad.append((k, agg, got, want[agg]))
            if baseline.pruning_violations(tree, region, st.trace):
                bad.append((k, agg, "visited below a covered node"))
    st = baseline.Stats()
    total = baseline.ar_aggregate(tree, baseline.Mbr(-1, -1, 2, 2), "count", st)
    ok = not bad and total == 1000 and st.visits == 1
    criterion(7, ok, f"50 regions x 3 aggregates exact, {len(bad)} failures, root-covering visits={st.visits}")


GIS_QUERIES = [
    "SELECT layer.usa_rivers, layer.usa_cities, layer.usa_stores; FROM Piet-Schema; "
    "WHERE intersection(layer.usa_rivers, layer.usa_cities,subplevel.Linestring) "
    "and contains(layer.usa_cities, layer.usa_stores,subplevel.Point);",
    "SELECT layer.usa_cities,measure.StoresQuantity; FROM Piet-Schema; "
    "WHERE intersection(layer.usa_cities, layer.usa_stores,subplevel.Point);",
    "SELECT layer.usa_cities,layer.usa_airports,layer.usa_stores; FROM Piet-Schema; "
    "WHERE intersection(usa_states.6,layer.usa_cities, subplevel.Point) and "
    "intersection(usa_states.6,layer.usa_airports, subplevel.Point) and "
    "intersection(usa_states.6,layer.usa_stores, subplevel.Point);",
]
FULL_QUERY = (
    "SELECT layer.usa_states; FROM Piet-Schema; "
    "WHERE intersection(layer.usa_states, layer.usa_stores,subplevel.point); | "
    "select {[Measures].[Unit Sales], [Measures].[Store Cost], [Measures].[Store Sales]} ON columns, "
    "{([Promotion Media].[All Media], [Product].[All Products])} ON rows from [Sales] where [Time].[1997]"
)


def _parent_sum_violations(star) -> tuple[int, int]:
    checked = bad = 0
    for cube in star.cubes.values():
        for dim in cube.dimensions.values():
            parents = [p for p, kids in dim.children.items() if kids and p]
            for p in parents:
                member = "[" + "].[".join((dim.name,) + p) + "]"
                q = parse_mdx(
                    f"select {{[Measures].[Unit Sales], [Measures].[Store Sales]}} ON columns, "
                    f"{{{member}, {member}.Children}} ON rows from [{cube.name}]"
                )
                res = eval_mdx(q, star)
                for j in range(len(res.columns)):
                    kids = math.fsum(res.body[1:, j])
                    checked += 1
                    bad += abs(res.body[0, j] - kids) > 1e-9 * max(1.0, abs(kids))
    return checked, bad


def test_criterion_08_gisolapql(criterion, tmp_path):
    problems = []
    for text in GIS_QUERIES + [FULL_QUERY]:
        ast = parse(text)
        if parse(print_query(ast)) != ast:
            problems.append("round trip")
    data = synth.running_example()
    synth.write_dataset(tmp_path, data, seed=3)
    store.save(build_overlay([data[synth.STATES], data[synth.STORES]]), tmp_path)
    sess = Session.open(tmp_path / "schema.xml", layers=[synth.STATES, synth.STORES])
    out = sess.run(FULL_QUERY)
    state = ("Store", "All Stores", "USA")
    expected = Crossjoin(
        Hierarchize(
            Union(
                Union(
                    SetExpr((Children(Member(state + ("CA",))),)),
                    SetExpr((Children(Member(state + ("OR",))),)),
                ),
                SetExpr((Children(Member(state + ("WA",))),)),
            )
        ),
        parse(FULL_QUERY).olap.rows,
    )
    if out.mdx.rows != expected:
        problems.append("rewrite shape")
    if not isinstance(out.mdx.rows.right, SetExpr) or not isinstance(out.mdx.rows.right.items[0], TupleExpr):
        problems.append("original rows")
    checked = 0
    stars = [sess.star]
    for seed in (1, 2):
        layers = synth.generate(synth.MapSpec(seed=seed, states=6, rivers=2, points=30))
        d = tmp_path / f"w{seed}"
        synth.write_dataset(d, layers, seed=seed)
        stars.append(Session.open_olap(d / "schema.xml").star)
    for star in stars:
        c, b = _parent_sum_violations(star)
        checked += c
        if b:
            problems.append(f"{b} parent sums")
    criterion(8, not problems, f"4 queries parse, rewrite AST exact, {checked} parent=sum(children) checks; {problems}")


def test_criterion_09_summability(criterion):
    bad = []
    regions = removals = 0
    for seed in range(50):
        layers = rand_map(500 + seed)
        ov = build_overlay(layers, box=BOX, grid=GridSpec(2, 2) if seed % 2 else GridSpec(1, 1))
        rng = random.Random(seed)
        # a point's extent is one cell, so dropping it leaves a union of
        # the other points: only multi-cell extents make the test meaningful
        layer = rng.choice([l for l in layers if l.kinds != {"point"}])
        gids = rng.sample(sorted(layer.geometries), k=rng.randint(1, len(layer)))
        cells = frozenset().union(*(ov.ext(layer.name, g) for g in gids))
        regions += 1
        if not engine.decide_summability(cells, ov):
            bad.append((seed, "union"))
        for c in sorted(cells):
            removals += 1
            if engine.decide_summability(cells - {c}, ov):
                bad.append((seed, "minus", c))
                break
    criterion(9, not bad, f"{regions} unions true, {removals} single-cell removals false, {len(bad)} failures")


def test_criterion_10_topology(criterion):
    inv = topo.build_invariant(topo.figure_fixture())
    lab = topo.figure_labels(inv)
    I, b, c = lab["I"], lab["b"], lab["c"]
    e = {k: lab[k] for k in "12345"}
    problems = []
    if not {(I, e["2"]), (I, e["4"])} <= inv.face_edge:
        problems.append("FaceEdge")
    if not {(I, b), (I, c)} <= inv.face_vertex:
        problems.append("FaceVertex")
    if not {(topo.CCW, e["1"], e["5"], e["2"], b), (topo.CCW, e["5"], e["2"], e["4"], b)} <= inv.between:
        problems.append("Between")
    sheared = topo.build_invariant(topo.transform_layers(topo.figure_fixture(), topo.shear(0.7, 2, 0.5, 3, -1)))
    if not topo.invariant_equal_up_to_relabel(inv, sheared):
        problems.append("shear isomorphism")
    euler = [inv.euler()]
    data = synth.running_example()
    euler.append(topo.build_invariant([data[synth.STATES]]).euler())
    if any(x != 2 for x in euler):
        problems.append(f"euler {euler}")
    # isolated rivers and points add components: V - E + F = 1 + C in general
    wet = topo.build_invariant([data[synth.STATES], data[synth.RIVERS], data[synth.CITIES]])
    if wet.euler() != 1 + wet.components():
        problems.append("euler with components")
    generic = 0
    for seed in range(20):
        layers = rand_map(seed)
        a = topo.build_invariant(layers)
        rng = random.Random(seed)
        f = topo.shear(rng.uniform(-1, 1), rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(-3, 3), 0.0)
        bb = topo.build_invariant(topo.transform_layers(layers, f))
        same_adj = all(
            topo.count_adjacent(a, r) == topo.count_adjacent(bb, r) for r in a.region_names() if a.region_faces(r)
        )
        if not (topo.invariant_equal_up_to_relabel(a, bb) and same_adj and a.euler() == 1 + a.components()):
            problems.append(f"random map {seed}")
        generic += 1
    criterion(10, not problems, f"figure relations present, shear isomorphic on {generic + 1} maps, V-E+F={euler}; {problems}")
