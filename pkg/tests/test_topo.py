import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import map_counts, rand_map

from piet import topo
from piet.geom import PointGeom, Polygon, Polyline
from piet.layer import Layer
from piet.subdivision import GridSpec, build_overlay


def squares(cells, name="s"):
    lay = Layer(name)
    for gid, (x, y) in enumerate(cells):
        lay.add(Polygon(gid, [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)]))
    return lay


def test_grid_neighbours():
    inv = topo.build_invariant([squares([(0, 0), (1, 0), (0, 1), (1, 1)])])
    for r in inv.region_names():
        assert topo.count_adjacent(inv, r) == 2
    assert topo.adjacent_regions(inv, "s.0") == {"s.1", "s.2"}
    # the centre is the one vertex of degree 4
    centre = inv.locate_vertex((1, 1))
    assert sum(1 for b in inv.between if b[4] == centre and b[0] == topo.CCW) == 4
    assert inv.euler() == 2


def test_corner_touch_is_not_adjacent():
    inv = topo.build_invariant([squares([(0, 0), (1, 1)])])
    assert topo.adjacent_regions(inv, "s.0") == set()
    assert inv.euler() == 2 and inv.components() == 1


def test_island():
    lay = squares([(0, 0), (5, 5)])
    inv = topo.build_invariant([lay])
    assert topo.adjacent_regions(inv, "s.1") == set()
    assert inv.components() == 2 and inv.euler() == 3
    with pytest.raises(Exception):
        inv.region_faces("s.9")


def test_extra_edge_breaks_isomorphism():
    base = topo.figure_fixture()
    road = Layer("road")
    road.add(Polyline(0, [(1, -2), (1, 6)]))
    a, b = topo.build_invariant(base), topo.build_invariant(base + [road])
    assert not topo.invariant_equal_up_to_relabel(a, b)
    assert topo.invariant_equal_up_to_relabel(b, topo.build_invariant([road] + base))


def test_point_is_a_vertex():
    base = topo.figure_fixture()
    well = Layer("well")
    well.add(PointGeom(0, (1, 1)))
    inv = topo.build_invariant(base + [well])
    assert len(inv.vertex) == len(topo.build_invariant(base).vertex) + 1
    v = inv.locate_vertex((1, 1))
    assert ("well.0", v) in inv.regions
    assert inv.euler() == 1 + inv.components()


def test_between_orientations_pair_up():
    inv = topo.build_invariant(topo.figure_fixture())
    for o, a, b, c, v in inv.between:
        mirror = topo.CW if o == topo.CCW else topo.CCW
        assert (mirror, c, b, a, v) in inv.between


def test_gridded_overlay_is_rebuilt():
    layers = topo.figure_fixture()
    ov = build_overlay(layers, grid=GridSpec(3, 3))
    assert topo.invariant_equal_up_to_relabel(topo.build_invariant(ov), topo.build_invariant(layers))


def test_dump(tmp_path):
    inv = topo.build_invariant(topo.figure_fixture())
    topo.build_invariant(topo.figure_fixture()).dump(tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert len(files) == 9 and "Between.csv" in files
    rows = (tmp_path / "Endpoints.csv").read_text().splitlines()
    assert rows[0] == "edge,vertex1,vertex2" and len(rows) == 1 + len(inv.endpoints)


def test_shear_must_preserve_orientation():
    with pytest.raises(ValueError):
        topo.shear(0.3, -1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_counts_match_noded_linework(seed):
    layers = [l for l in rand_map(seed, integer=True) if l.kinds != {"point"}]
    inv = topo.build_invariant(layers)
    assert (len(inv.vertex), len(inv.edge), len(inv.face)) == map_counts(layers)
    assert len(inv.exterior_face) == 1
