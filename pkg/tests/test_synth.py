import math

from shapely.geometry import Point
from shapely.geometry import Polygon as SPolygon
from shapely.ops import unary_union

from piet import synth
from piet.layer import layer_to_text


def test_deterministic():
    a = synth.generate(synth.MapSpec(seed=9, states=12, rivers=5, points=40))
    b = synth.generate(synth.MapSpec(seed=9, states=12, rivers=5, points=40))
    assert {k: layer_to_text(v) for k, v in a.items()} == {k: layer_to_text(v) for k, v in b.items()}
    c = synth.generate(synth.MapSpec(seed=10, states=12, rivers=5, points=40))
    assert layer_to_text(c[synth.CITIES]) != layer_to_text(a[synth.CITIES])


def test_counts():
    m = synth.generate(synth.MapSpec(seed=1, states=7, rivers=4, points=30))
    assert len(m[synth.STATES]) == 7 and len(m[synth.RIVERS]) == 4
    assert len(m[synth.CITIES]) == len(m[synth.VOLCANOES]) == len(m[synth.STORES]) == 30
    assert len(m[synth.AIRPORTS]) == 3


def test_states_tile_the_box():
    spec = synth.MapSpec(seed=3, states=23)
    polys = [SPolygon(g.vertices) for g in synth.generate(spec)[synth.STATES]]
    b = spec.box
    assert math.isclose(sum(p.area for p in polys), b.area, rel_tol=1e-9)
    assert math.isclose(unary_union(polys).area, b.area, rel_tol=1e-9)
    assert all(p.is_valid and p.convex_hull.area - p.area < 1e-6 for p in polys)


def test_west_skew():
    n = 4000
    heavy = synth.generate(synth.MapSpec(seed=2, states=1, rivers=1, points=n, west_heavy=True))
    flat = synth.generate(synth.MapSpec(seed=2, states=1, rivers=1, points=n))
    # density 2(1 - u) puts three quarters of the mass in the western half
    sd = math.sqrt(0.75 * 0.25 / n)
    assert abs(synth.volcano_skew(heavy[synth.VOLCANOES]) - 0.75) < 4 * sd
    assert abs(synth.volcano_skew(flat[synth.VOLCANOES]) - 0.5) < 4 * math.sqrt(0.25 / n)


def test_running_example():
    ex = synth.running_example()
    states = {g.gid: SPolygon(g.vertices) for g in ex[synth.STATES]}
    holding = {s for s, p in states.items() for st in ex[synth.STORES] if p.covers(Point(st.p))}
    assert {ex[synth.STATES].attr(s, "name") for s in holding} == {"WA", "OR", "CA"}


def test_dataset_files(tmp_path):
    layers = synth.generate(synth.MapSpec(seed=4, states=5, rivers=2, points=15))
    path = synth.write_dataset(tmp_path, layers, seed=4)
    assert path.name == "schema.xml"
    assert sorted(p.name for p in (tmp_path / "layers").iterdir()) == sorted(f"{k}.tsv" for k in layers)
    assert (tmp_path / "warehouse" / "cube.json").is_file() and (tmp_path / "states_olap.csv").is_file()
    bare = synth.write_dataset(tmp_path / "bare", layers, warehouse=False)
    assert not (tmp_path / "bare" / "warehouse").exists() and bare.is_file()
