"""Seeded synthetic maps, warehouses and the small running example.

Generated maps mimic a national map: states tile the bounding box with
convex trapezoids, rivers are random polylines, and cities, volcanoes,
stores and airports are points. Everything is reproducible from the seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .dims import (
    LayerDesc,
    MappingRow,
    MeasureDesc,
    OLAPRelation,
    OlapTable,
    PietSchema,
    Property,
    SubPLevel,
    schema_to_xml,
)
from .errors import InvalidGeometryError
from .geom import BBox, PointGeom, Polygon, Polyline
from .layer import Layer, write_layer
from .store import save_mapping, save_warehouse

STATES = "usa_states"
RIVERS = "usa_rivers"
CITIES = "usa_cities"
VOLCANOES = "usa_volcanoes"
STORES = "usa_stores"
AIRPORTS = "usa_airports"

STATE_CODES = (
    "CA OR WA NV AZ UT ID MT WY CO NM TX OK KS NE SD ND MN IA MO AR LA WI IL MS MI IN KY TN AL OH "
    "GA FL SC NC VA WV PA NY VT NH ME MA RI CT NJ DE MD AK HI"
).split()

DEFAULT_BOX = BBox(0.0, 0.0, 100.0, 60.0)

PRODUCTS = {
    "Drink": ("Alcoholic Beverages", "Beverages", "Dairy"),
    "Food": ("Baked Goods", "Produce", "Snack Foods"),
    "Non-Consumable": ("Household", "Health and Hygiene"),
}
MEDIA = ("Bulk Mail", "Daily Paper", "Radio", "TV")
YEARS = ("1997", "1998")
QUARTERS = ("Q1", "Q2", "Q3", "Q4")


def state_name(i: int) -> str:
    return STATE_CODES[i] if i < len(STATE_CODES) else f"S{i}"


def _r(x: float) -> float:
    return round(x, 4)


def _split(rng: random.Random, lo: float, hi: float, k: int, jitter: float) -> list[float]:
    """``k + 1`` increasing cut positions from ``lo`` to ``hi``."""
    step = (hi - lo) / k
    cuts = [lo]
    for i in range(1, k):
        cuts.append(_r(lo + step * (i + rng.uniform(-jitter, jitter))))
    cuts.append(hi)
    return cuts


def convex_tiles(rng: random.Random, n: int, box: BBox = DEFAULT_BOX, jitter: float = 0.3) -> list[list[tuple]]:
    """``n`` convex trapezoids tiling ``box``, numbered west to east.

    The box is cut into vertical strips; each strip is cut by non-crossing
    slanted segments, so every tile has two vertical sides and is convex.
    """
    if n < 1:
        return []
    w, h = box.xmax - box.xmin, box.ymax - box.ymin
    ncols = max(1, min(n, round(math.sqrt(n * w / h))))
    per = [n // ncols + (1 if i < n % ncols else 0) for i in range(ncols)]
    xs = _split(rng, box.xmin, box.xmax, ncols, jitter)
    tiles = []
    for c, k in enumerate(per):
        left = _split(rng, box.ymin, box.ymax, k, jitter)
        right = _split(rng, box.ymin, box.ymax, k, jitter)
        xl, xr = xs[c], xs[c + 1]
        for i in range(k):
            ring = [(xl, left[i]), (xr, right[i]), (xr, right[i + 1]), (xl, left[i + 1])]
            tiles.append(ring)
    return tiles


def random_polyline(rng: random.Random, box: BBox, vertices: tuple[int, int] = (2, 5), step: float | None = None):
    """A random walk with a slowly turning heading, kept inside ``box``."""
    m = 0.02 * min(box.xmax - box.xmin, box.ymax - box.ymin)
    step = step or 0.12 * min(box.xmax - box.xmin, box.ymax - box.ymin)
    x, y = rng.uniform(box.xmin + m, box.xmax - m), rng.uniform(box.ymin + m, box.ymax - m)
    heading = rng.uniform(0, 2 * math.pi)
    pts = [(_r(x), _r(y))]
    for _ in range(rng.randint(*vertices) - 1):
        heading += rng.uniform(-0.8, 0.8)
        d = step * rng.uniform(0.5, 1.5)
        x = min(max(x + d * math.cos(heading), box.xmin + m), box.xmax - m)
        y = min(max(y + d * math.sin(heading), box.ymin + m), box.ymax - m)
        p = (_r(x), _r(y))
        if p != pts[-1]:
            pts.append(p)
    return pts


def _west_x(rng: random.Random, box: BBox) -> float:
    # density falls linearly from the west edge
    u = 1.0 - math.sqrt(1.0 - rng.random())
    return box.xmin + u * (box.xmax - box.xmin)


def _point(rng: random.Random, box: BBox, west_heavy: bool = False) -> tuple[float, float]:
    m = 1e-3 * (box.xmax - box.xmin)
    x = _west_x(rng, box) if west_heavy else rng.uniform(box.xmin, box.xmax)
    x = min(max(x, box.xmin + m), box.xmax - m)
    y = rng.uniform(box.ymin + m, box.ymax - m)
    return (_r(x), _r(y))


@dataclass(frozen=True)
class MapSpec:
    seed: int = 0
    states: int = 50
    rivers: int = 30
    points: int = 200
    airports: int | None = None
    west_heavy: bool = False
    box: BBox = DEFAULT_BOX


def generate(spec: MapSpec) -> dict[str, Layer]:
    """Layers of a synthetic map; the same spec always gives the same map."""
    rng = random.Random(spec.seed)
    box = spec.box
    out = {}

    states = Layer(STATES)
    for gid, ring in enumerate(convex_tiles(random.Random(rng.random()), spec.states, box)):
        states.add(Polygon(gid, ring), {"name": state_name(gid), "population": rng.randint(5, 400) * 10_000})
    out[STATES] = states

    rivers = Layer(RIVERS)
    rr = random.Random(rng.random())
    eps = 1e-9 * box.diagonal
    gid = 0
    while gid < spec.rivers:
        pts = random_polyline(rr, box)
        if len(pts) < 2:
            continue
        try:
            g = Polyline(gid, pts)
            g.validate(eps)
        except InvalidGeometryError:
            continue
        rivers.add(g, {"name": f"river{gid}", "flow": _r(rr.uniform(10, 5000))})
        gid += 1
    out[RIVERS] = rivers

    pr = random.Random(rng.random())
    cities = Layer(CITIES)
    for gid in range(spec.points):
        cities.add(PointGeom(gid, _point(pr, box)), {"name": f"city{gid}", "population": pr.randint(1, 900) * 1000})
    out[CITIES] = cities

    volcanoes = Layer(VOLCANOES)
    for gid in range(spec.points):
        volcanoes.add(
            PointGeom(gid, _point(pr, box, spec.west_heavy)),
            {"name": f"volcano{gid}", "elevation": float(pr.randint(300, 6000))},
        )
    out[VOLCANOES] = volcanoes

    stores = Layer(STORES)
    for gid in range(spec.points):
        stores.add(PointGeom(gid, _point(pr, box)), {"name": f"store{gid}", "employees": pr.randint(5, 120)})
    out[STORES] = stores

    n_air = spec.airports if spec.airports is not None else max(1, spec.points // 10)
    airports = Layer(AIRPORTS)
    for gid in range(n_air):
        airports.add(PointGeom(gid, _point(pr, box)), {"name": f"airport{gid}"})
    out[AIRPORTS] = airports
    return out


def volcano_skew(volcanoes: Layer, box: BBox = DEFAULT_BOX) -> float:
    """Fraction of volcanoes in the western half."""
    mid = (box.xmin + box.xmax) / 2
    pts = [g.p for g in volcanoes]
    return sum(1 for x, _ in pts if x < mid) / len(pts) if pts else 0.0


# ---------------------------------------------------------------------------
# Warehouse


def _state_of(p, states: Layer) -> int | None:
    from .geom import Location, point_in_ring

    for gid in sorted(states.geometries):
        if point_in_ring(p, states[gid].vertices, 1e-12) is not Location.OUTSIDE:
            return gid
    return None


def sales_warehouse(layers: Mapping[str, Layer], seed: int, path: str | Path) -> tuple[Path, list[MappingRow]]:
    """A Sales cube whose Store dimension follows the map's states.

    Store hierarchy: All Stores > Store Country > Store State > Store City >
    Store Name. Each store point goes to the state that contains it, and
    every state holding a store gets a mapping row to its State member.
    """
    rng = random.Random(seed * 7919 + 1)
    states, stores = layers[STATES], layers[STORES]
    store_rows, mapping, used = [], [], set()
    for gid in sorted(stores.geometries):
        s = _state_of(stores[gid].p, states)
        if s is None:
            continue
        st = states.attr(s, "name", state_name(s))
        city = f"{st}-city{gid % 3}"
        store_rows.append(
            {"store_id": str(gid), "Store Country": "USA", "Store State": st, "Store City": city,
             "Store Name": f"Store {gid}"}
        )
        used.add(s)
    for s in sorted(used):
        st = states.attr(s, "name", state_name(s))
        mapping.append(MappingRow(s, st, f"state {st}"))
    product_rows = []
    for fam in sorted(PRODUCTS):
        for cat in PRODUCTS[fam]:
            product_rows.append({"product_id": f"{fam}/{cat}", "Product Family": fam, "Product Category": cat})
    media_rows = [{"media_id": m, "Media Type": m} for m in MEDIA]
    time_rows = [{"time_id": f"{y}-{q}", "Year": y, "Quarter": q} for y in YEARS for q in QUARTERS]
    facts = []
    for s in store_rows:
        for p in product_rows:
            for m in media_rows:
                if rng.random() < 0.5:
                    continue
                for t in time_rows:
                    units = rng.randint(1, 60)
                    price = rng.randint(100, 900) / 100
                    cost = rng.randint(30, 90) / 100
                    facts.append(
                        {"store_id": s["store_id"], "product_id": p["product_id"], "media_id": m["media_id"],
                         "time_id": t["time_id"], "Unit Sales": units,
                         "Store Sales": round(units * price, 2), "Store Cost": round(units * price * cost, 2)}
                    )
    dims = [
        {"name": "Store", "all": "All Stores", "levels": ["Store Country", "Store State", "Store City", "Store Name"],
         "key": "store_id"},
        {"name": "Product", "all": "All Products", "levels": ["Product Family", "Product Category"],
         "key": "product_id"},
        {"name": "Promotion Media", "all": "All Media", "levels": ["Media Type"], "key": "media_id"},
        {"name": "Time", "all": None, "levels": ["Year", "Quarter"], "key": "time_id"},
    ]
    out = save_warehouse(
        path, "Sales", dims,
        {"Store": store_rows, "Product": product_rows, "Promotion Media": media_rows, "Time": time_rows},
        ["Unit Sales", "Store Cost", "Store Sales"], facts,
    )
    return out, mapping


# ---------------------------------------------------------------------------
# Schema and dataset directories


def _props(layer: Layer) -> tuple[Property, ...]:
    keys = sorted({k for a in layer.attributes.values() for k in a})
    out = []
    for k in keys:
        v = next(a[k] for a in layer.attributes.values() if k in a)
        out.append(Property(k, k, "Double" if isinstance(v, (int, float)) else "String"))
    return tuple(out)


def default_schema(layers: Mapping[str, Layer], warehouse: str | None = "warehouse/cube.json") -> PietSchema:
    s = PietSchema(name="Piet-Schema", warehouse=warehouse)
    for kind in ("Point", "LineString", "Polygon"):
        s.subplevels[kind] = SubPLevel(kind, f"gis_subp_{kind.lower()}")
    sublevels = {"point": ("Point",), "polyline": ("LineString", "Point"), "polygon": ("Polygon", "LineString", "Point")}
    for name in sorted(layers):
        lay = layers[name]
        kind = next(iter(lay.kinds)) if lay.kinds else "point"
        olap = None
        if name == STATES and warehouse:
            olap = OLAPRelation(
                table="states_olap.csv", gisId="gisid", olapId="olapid", olapDimensionName="Store",
                olapLevelName="Store State",
                olapTable=OlapTable("store", "store_id", "store_state", "[Store].[All Stores].[USA]"),
            )
        s.layers[name] = LayerDesc(
            name=name, table=name, properties=_props(lay), sublevels=sublevels[kind], olap=olap, file=f"layers/{name}.tsv"
        )
    wanted = [
        MeasureDesc("StoresQuantity", STORES, "count"),
        MeasureDesc("VolcanoCount", VOLCANOES, "count"),
        MeasureDesc("AvgElevation", VOLCANOES, "avg", "elevation"),
        MeasureDesc("MaxElevation", VOLCANOES, "max", "elevation"),
        MeasureDesc("RiverCount", RIVERS, "count"),
        MeasureDesc("RiverLength", RIVERS, "length"),
        MeasureDesc("CityCount", CITIES, "count"),
        MeasureDesc("Population", STATES, "sum", "population"),
        MeasureDesc("StateArea", STATES, "area"),
    ]
    for m in wanted:
        if m.layer in layers:
            s.measures[m.name] = m
    return s


def write_dataset(directory: str | Path, layers: Mapping[str, Layer], seed: int = 0, warehouse: bool = True) -> Path:
    """Layer files, ``schema.xml``, the state mapping and the Sales warehouse."""
    d = Path(directory)
    (d / "layers").mkdir(parents=True, exist_ok=True)
    for name in sorted(layers):
        write_layer(layers[name], d / "layers" / f"{name}.tsv")
    wh = warehouse and STATES in layers and STORES in layers
    if wh:
        _, mapping = sales_warehouse(layers, seed, d / "warehouse")
        save_mapping(mapping, d / "states_olap.csv")
    schema = default_schema(layers, "warehouse/cube.json" if wh else None)
    (d / "schema.xml").write_text(schema_to_xml(schema), encoding="utf-8")
    return d / "schema.xml"


def running_example() -> dict[str, Layer]:
    """A hand-made west-coast map: three states with stores, one without.

    WA, OR and CA are stacked north to south and NV lies to their east;
    stores sit in the three coastal states only, so a query for states
    holding a store returns exactly WA, OR and CA.
    """
    states = Layer(STATES)
    rings = {
        "WA": [(0, 20), (10, 20), (10, 30), (0, 30)],
        "OR": [(0, 10), (10, 10), (10, 20), (0, 20)],
        "CA": [(0, 0), (10, 0), (10, 10), (0, 10)],
        "NV": [(10, 0), (20, 0), (20, 30), (10, 30)],
    }
    for gid, (code, ring) in enumerate(rings.items()):
        states.add(Polygon(gid, ring), {"name": code, "population": (gid + 1) * 1_000_000})
    rivers = Layer(RIVERS)
    rivers.add(Polyline(0, [(1, 25), (6, 23), (14, 22)]), {"name": "Columbia"})
    rivers.add(Polyline(1, [(2, 4), (5, 6), (8, 8)]), {"name": "Sacramento"})
    rivers.add(Polyline(2, [(15, 5), (15, 12)]), {"name": "Humboldt"})
    cities = Layer(CITIES)
    for gid, (p, pop) in enumerate([((4, 24), 700_000), ((5, 15), 650_000), ((3, 3), 800_000), ((15, 15), 200_000)]):
        cities.add(PointGeom(gid, p), {"name": f"city{gid}", "population": pop})
    volcanoes = Layer(VOLCANOES)
    for gid, (p, elev) in enumerate([((2, 27), 4392.0), ((3, 17), 3429.0), ((7, 2), 4317.0), ((8, 12), 2799.0)]):
        volcanoes.add(PointGeom(gid, p), {"name": f"volcano{gid}", "elevation": elev})
    stores = Layer(STORES)
    for gid, p in enumerate([(2, 22), (7, 26), (4, 12), (6, 5), (8, 3)]):
        stores.add(PointGeom(gid, p), {"name": f"store{gid}", "employees": 10 + gid})
    airports = Layer(AIRPORTS)
    for gid, p in enumerate([(5, 21), (2, 8), (17, 20)]):
        airports.add(PointGeom(gid, p), {"name": f"airport{gid}"})
    return {l.name: l for l in (states, rivers, cities, volcanoes, stores, airports)}


def layers_of(spec: MapSpec | None = None, **kw) -> list[Layer]:
    """Shorthand: the generated layers as a list in a fixed order."""
    layers = generate(spec or MapSpec(**kw))
    return [layers[k] for k in sorted(layers)]
