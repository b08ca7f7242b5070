import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piet.dims import (
    ALL,
    Cube,
    Dimension,
    GeometryGraph,
    GisDimensionInstance,
    GisDimensionSchema,
    GisFactTable,
    LayerDesc,
    MeasureDesc,
    OLAPRelation,
    OlapDimension,
    OlapTable,
    PietSchema,
    Property,
    SubPLevel,
    alpha,
    apply_overlay_update,
    ft,
    merged_graph,
    parse_piet_schema,
    rollup,
    rollup_function,
    schema_to_xml,
    validate,
)
from piet.errors import SchemaError, UnknownGeometryError, UnmappedMemberError
from piet.geom import BBox, Polygon, Polyline
from piet.layer import Layer
from piet.subdivision import build_overlay

RIVER = GeometryGraph.of(
    "Lr", ["point", "line", "polyline", ALL], [("point", "line"), ("line", "polyline"), ("polyline", ALL)]
)


class TestValidate:
    def test_valid(self):
        assert validate(GisDimensionSchema({"Lr": RIVER})) == []

    def test_missing_all(self):
        g = GeometryGraph.of("Lr", ["point", "line"], [("point", "line")])
        assert any("no All" in v for v in validate(GisDimensionSchema({"Lr": g})))

    def test_two_points(self):
        g = GeometryGraph.of("Lr", ["point", "Point", ALL], [("point", ALL), ("Point", ALL)])
        assert any("exactly one point" in v for v in validate(GisDimensionSchema({"Lr": g})))

    def test_cycle_and_dangling(self):
        g = GeometryGraph.of(
            "Lr", ["point", "a", "b", ALL], [("point", "a"), ("a", "b"), ("b", "a"), ("b", ALL), ("b", "zz")]
        )
        out = validate(GisDimensionSchema({"Lr": g}))
        assert any("cycle" in v for v in out)
        assert any("unknown level zz" in v for v in out)

    def test_all_outgoing(self):
        g = GeometryGraph.of("Lr", ["point", ALL], [("point", ALL), (ALL, "point")])
        assert any("All has outgoing" in v for v in validate(GisDimensionSchema({"Lr": g})))

    def test_att_targets(self):
        s = GisDimensionSchema(
            {"Lr": RIVER},
            att={("river", "Rivers"): ("polyline", "Lr"), ("city", "Cities"): ("point", "Lc")},
            olap_dims={"Rivers": OlapDimension("Rivers", ("river",))},
        )
        out = validate(s)
        assert out == ["Att(city, Cities) targets unknown layer Lc", "Att(city, Cities) references unknown dimension Cities"]

    def test_precedes(self):
        d = OlapDimension("Geo", ("country", "state", "city"))
        assert d.precedes("city", "state") and d.precedes("city", "city")
        assert not d.precedes("country", "state")


class TestInstance:
    inst = GisDimensionInstance(
        GisDimensionSchema({"Lr": RIVER}),
        rollups={("Lr", "line", "polyline"): frozenset({(1, 10), (2, 10), (3, 11), (3, 12)})},
        alphas={("Lr", "Rivers", "river"): {"Colorado": 10, "Rio Grande": 11}},
    )

    def test_rollup(self):
        assert rollup(self.inst, "Lr", ("line", "polyline"), 1) == {10}
        assert rollup(self.inst, "Lr", ("line", "polyline"), 3) == {11, 12}
        assert rollup(self.inst, "Lr", ("polyline", ALL), 10) == {"all"}
        with pytest.raises(UnknownGeometryError):
            rollup(self.inst, "Lr", ("line", "polyline"), 99)
        with pytest.raises(SchemaError):
            rollup(self.inst, "Lr", ("point", "line"), 1)

    def test_rollup_function(self):
        assert rollup_function(self.inst, "Lr", ("line", "polyline")) == {1: 10, 2: 10, 3: 11}

    def test_alpha(self):
        assert alpha(self.inst, "Lr", "Rivers", "Colorado") == 10
        assert alpha(self.inst, "Lr", "Rivers", "Rio Grande", "river") == 11
        with pytest.raises(UnmappedMemberError) as e:
            alpha(self.inst, "Lr", "Rivers", "Nile")
        assert e.value.exit_code == 2


def test_merged_graph():
    g = merged_graph(["polygon", "polyline"])
    assert validate(GisDimensionSchema({"overlay": g})) == []
    assert "node" not in g.nodes
    assert g.parents("OPolygon") == ["polygon"]
    assert g.children("polyline") == ["Node", "OPolyline"]
    assert ("node", ALL) in merged_graph(["point"]).edges


def test_overlay_update():
    states = Layer("Ls")
    states.add(Polygon(0, [(0, 0), (4, 0), (4, 4), (0, 4)]))
    rivers = Layer("Lr")
    rivers.add(Polyline(0, [(1, 1), (3, 3)]))
    ov = build_overlay([states, rivers], box=BBox(-1, -1, 5, 5))
    poly = GeometryGraph.of("Ls", ["point", "polygon", ALL], [("point", "polygon"), ("polygon", ALL)])
    schema = GisDimensionSchema({"Ls": poly, "Lr": RIVER}, att={("river", "Rivers"): ("line", "Lr")})
    s2, i2 = apply_overlay_update(schema, GisDimensionInstance(schema), ov)
    assert validate(s2) == []
    assert s2.att[("river", "Rivers")] == ("polyline", "Lr")
    assert i2.functional
    faces = {c for c, g in i2.rollups[("Ls", "OPolygon", "polygon")]}
    assert faces == ov.cells_of("Ls", 0, ov.cells[next(iter(faces))].kind)
    segs = {c for c, g in i2.rollups[("Lr", "OPolyline", "polyline")]}
    assert len(segs) >= 1
    with pytest.raises(SchemaError):
        apply_overlay_update(GisDimensionSchema({"Ls": poly}), GisDimensionInstance(schema), ov)


def test_fact_table():
    t = GisFactTable("polygon", "Ls", ("pop", "area"))
    t.add(1, {"pop": 10.0, "area": 2.0})
    t.add(2, [5.0, 1.0])
    assert ft(t, 2, "Ls") == (5.0, 1.0)
    assert ft([t], 9, "Ls") is None
    assert ft(t, 1, "Lr") is None
    with pytest.raises(SchemaError):
        t.add(1, [0.0, 0.0])
    with pytest.raises(SchemaError):
        t.add(3, {"pop": 1.0})

    lay = Layer("Lc")
    lay.add(Polygon(0, [(0, 0), (1, 0), (1, 1)]), {"pop": 3})
    lay.add(Polygon(1, [(2, 0), (3, 0), (3, 1)]), {"pop": "n/a"})
    t2 = GisFactTable.from_layer(lay, ["pop"])
    assert t2.level == "polygon" and list(t2.rows) == [0]


def _geo():
    d = Dimension("Geo", ("country", "state"), "All Geo")
    for c, s in [("US", "CA"), ("US", "OR"), ("MX", "BC")]:
        d.add_leaf([c, s])
    d.finalize()
    return d


class TestStar:
    def test_tree(self):
        d = _geo()
        assert d.members_at("country") == [("All Geo", "MX"), ("All Geo", "US")]
        assert d.find("state", "OR") == ("All Geo", "US", "OR")
        assert d.level_of(("All Geo",)) == "(All)"
        assert d.parent(("All Geo", "US")) == ("All Geo",)
        assert d.parent(("All Geo",)) is None
        assert d.is_leaf(("All Geo", "US", "CA"))
        assert d.to_str(("All Geo", "US")) == "[Geo].[All Geo].[US]"
        with pytest.raises(UnmappedMemberError):
            d.find("state", "TX")
        with pytest.raises(SchemaError):
            d.add_leaf(["US"])

    def test_cube_values(self):
        d = _geo()
        c = Cube("Sales", {"Geo": d}, ("units",))
        c.add_rows([{"Geo": ("US", "CA"), "units": 3}, {"Geo": ("US", "OR"), "units": 4}, {"Geo": ("MX", "BC"), "units": 5}])
        assert c.value({"Geo": ("All Geo", "US")}, "units") == 7.0
        assert c.value({}, "units") == 12.0
        assert c.group("Geo", "country", "units") == {("All Geo", "MX"): 5.0, ("All Geo", "US"): 7.0}
        with pytest.raises(SchemaError):
            c.value({}, "profit")
        with pytest.raises(SchemaError):
            c.add_rows([{"Geo": ("US",), "units": 1}])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([("US", "CA"), ("US", "OR"), ("MX", "BC")]), st.integers(-100, 100)), max_size=30))
def test_parent_is_sum_of_children(rows):
    d = _geo()
    c = Cube("Sales", {"Geo": d}, ("units",))
    c.add_rows([{"Geo": g, "units": v} for g, v in rows])
    for p in d.children:
        kids = d.children[p]
        if kids:
            assert c.value({"Geo": p}, "units") == sum(c.value({"Geo": k}, "units") for k in kids)


def _schema():
    s = PietSchema(name="demo", warehouse="warehouse")
    s.subplevels["Polygon"] = SubPLevel("Polygon", "gis_subp_polygon")
    s.layers["states"] = LayerDesc(
        "states",
        "states",
        properties=(Property("pop", "pop"),),
        sublevels=("Polygon",),
        olap=OLAPRelation("states_map", "gisid", "olapid", "Store", "state", OlapTable("dim_store", "id", "name", "All")),
        file="layers/states.tsv",
    )
    s.measures["n_states"] = MeasureDesc("n_states", "states")
    s.measures["pop"] = MeasureDesc("pop", "states", "sum", "pop")
    return s


def test_schema_xml_round_trip():
    s = _schema()
    text = schema_to_xml(s)
    back = parse_piet_schema(text)
    assert back.layers == s.layers
    assert back.measures == s.measures
    assert back.subplevels == s.subplevels
    assert back.warehouse == "warehouse" and back.name == "demo"
    assert schema_to_xml(back) == text


def test_schema_errors():
    with pytest.raises(SchemaError):
        parse_piet_schema("<PietSchema><Layer")
    with pytest.raises(SchemaError):
        parse_piet_schema('<PietSchema><Measure name="m" layer="nope"/></PietSchema>')
    with pytest.raises(SchemaError):
        parse_piet_schema('<PietSchema><Layer/></PietSchema>')
    with pytest.raises(SchemaError):
        _schema().layer("rivers")
