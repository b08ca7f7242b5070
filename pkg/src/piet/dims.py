"""GIS dimensions, GIS fact tables, the OLAP star schema and the Piet schema."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import SchemaError, UnknownGeometryError, UnmappedMemberError

POINT = "point"
ALL = "All"
NODE, OPOLYLINE, OPOLYGON = "Node", "OPolyline", "OPolygon"

# association level codes -> level names of the updated hierarchy
_SUB_LEVEL = {"Node": NODE, "OPl": OPOLYLINE, "OPg": OPOLYGON}
_GEOM_LEVEL = {"Pt": "node", "Pl": "polyline", "Pg": "polygon"}


@dataclass(frozen=True)
class GeometryGraph:
    layer: str
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]

    @classmethod
    def of(cls, layer: str, nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> "GeometryGraph":
        return cls(layer, frozenset(nodes), frozenset(tuple(e) for e in edges))

    def parents(self, level: str) -> list[str]:
        return sorted(k for j, k in self.edges if j == level)

    def children(self, level: str) -> list[str]:
        return sorted(j for j, k in self.edges if k == level)


@dataclass(frozen=True)
class OlapDimension:
    """An OLAP dimension schema: levels listed from coarsest to finest."""

    name: str
    levels: tuple[str, ...]
    has_all: bool = True
    all_name: str | None = None

    def precedes(self, finer: str, coarser: str) -> bool:
        """The partial order on levels: ``finer`` rolls up to ``coarser``."""
        i, j = self.levels.index(finer), self.levels.index(coarser)
        return i >= j


@dataclass(frozen=True)
class GisDimensionSchema:
    graphs: Mapping[str, GeometryGraph]
    att: Mapping[tuple[str, str], tuple[str, str]] = field(default_factory=dict)
    olap_dims: Mapping[str, OlapDimension] = field(default_factory=dict)


def validate(schema: GisDimensionSchema) -> list[str]:
    """Constraint violations of a GIS dimension schema (empty when valid)."""
    out = []
    for name in sorted(schema.graphs):
        g = schema.graphs[name]
        where = f"layer {name}"
        for j, k in sorted(g.edges):
            for lvl in (j, k):
                if lvl not in g.nodes:
                    out.append(f"{where}: edge ({j}, {k}) references unknown level {lvl}")
        if ALL not in g.nodes:
            out.append(f"{where}: no All node")
        elif any(j == ALL for j, _ in g.edges):
            out.append(f"{where}: All has outgoing edges")
        points = [n for n in g.nodes if n.lower() == POINT]
        if len(points) != 1:
            out.append(f"{where}: expected exactly one point node, found {len(points)}")
        else:
            p = points[0]
            if any(k == p for _, k in g.edges):
                out.append(f"{where}: point has incoming edges")
        sources = sorted(n for n in g.nodes if not any(k == n for _, k in g.edges))
        if points and len(sources) > 1:
            out.append(f"{where}: levels without incoming edges other than point: {sources}")
        if _has_cycle(g):
            out.append(f"{where}: geometry graph has a cycle")
    for (attr, dim), (level, layer) in sorted(schema.att.items()):
        if layer not in schema.graphs:
            out.append(f"Att({attr}, {dim}) targets unknown layer {layer}")
        elif level not in schema.graphs[layer].nodes:
            out.append(f"Att({attr}, {dim}) targets unknown level {level} in layer {layer}")
        if schema.olap_dims and dim not in schema.olap_dims:
            out.append(f"Att({attr}, {dim}) references unknown dimension {dim}")
    return out


def _has_cycle(g: GeometryGraph) -> bool:
    adj = defaultdict(list)
    for j, k in g.edges:
        adj[j].append(k)
    state: dict[str, int] = {}

    def visit(n) -> bool:
        state[n] = 1
        for m in adj[n]:
            s = state.get(m, 0)
            if s == 1 or (s == 0 and visit(m)):
                return True
        state[n] = 2
        return False

    return any(state.get(n, 0) == 0 and visit(n) for n in sorted(g.nodes))


@dataclass(frozen=True)
class GisDimensionInstance:
    schema: GisDimensionSchema
    # (layer, from level, to level) -> set of (child gid, parent gid)
    rollups: Mapping[tuple[str, str, str], frozenset[tuple[object, object]]] = field(default_factory=dict)
    # (layer, dimension, attribute) -> member -> gid
    alphas: Mapping[tuple[str, str, str], Mapping[str, int]] = field(default_factory=dict)
    olap_rollups: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    functional: bool = False


def rollup(instance: GisDimensionInstance, layer: str, edge: tuple[str, str], gid) -> set:
    """Parents of ``gid`` along the graph edge ``edge`` of ``layer``."""
    j, k = edge
    if k == ALL:
        return {"all"}
    rel = instance.rollups.get((layer, j, k))
    if rel is None:
        raise SchemaError(f"layer {layer} has no rollup {j}->{k}")
    out = {p for c, p in rel if c == gid}
    if not out and not any(c == gid for c, _ in rel):
        raise UnknownGeometryError(f"{gid} is not a member of level {j} in layer {layer}")
    return out


def rollup_function(instance: GisDimensionInstance, layer: str, edge: tuple[str, str]) -> dict:
    """The relation of an edge as a function; multiple parents keep the smallest."""
    j, k = edge
    out: dict = {}
    for c, p in instance.rollups.get((layer, j, k), ()):
        if c not in out or p < out[c]:
            out[c] = p
    return out


def alpha(instance: GisDimensionInstance, layer: str, dim: str, member: str, attribute: str | None = None) -> int:
    for (l, d, a), table in instance.alphas.items():
        if l == layer and d == dim and (attribute is None or a == attribute):
            if member in table:
                return table[member]
    raise UnmappedMemberError(f"member {member!r} of {dim} has no geometry in layer {layer}")


def merged_graph(layer_kinds: Iterable[str]) -> GeometryGraph:
    """Hierarchy of the combined layers after the overlay update."""
    kinds = set(layer_kinds)
    nodes = {POINT, NODE, OPOLYLINE, OPOLYGON, "polyline", "polygon", ALL}
    edges = {
        (POINT, NODE),
        (POINT, OPOLYLINE),
        (POINT, OPOLYGON),
        (NODE, "polyline"),
        (OPOLYLINE, "polyline"),
        (OPOLYGON, "polygon"),
        ("polyline", "polygon"),
        ("polygon", ALL),
    }
    if "point" in kinds:
        nodes.add("node")
        edges |= {(NODE, "node"), ("node", ALL)}
    if "polyline" in kinds:
        edges.add(("polyline", ALL))
    return GeometryGraph.of("overlay", nodes, edges)


def apply_overlay_update(schema: GisDimensionSchema, instance: GisDimensionInstance, overlay):
    """Replace per-layer graphs by one merged hierarchy with sub-levels.

    Returns the new (schema, instance). Rollups from the sub-levels are
    populated from the overlay associations and are functional.
    """
    names = set(overlay.layers)
    unknown = names - set(schema.graphs)
    if unknown:
        raise SchemaError(f"overlay layers {sorted(unknown)} are not in the schema")
    kinds = set()
    for l in overlay.layers.values():
        kinds |= l.kinds
    graph = merged_graph(kinds)
    graphs = {n: g for n, g in schema.graphs.items() if n not in names}
    for n in names:
        graphs[n] = replace(graph, layer=n)
    att = {}
    for (attr, dim), (level, layer) in schema.att.items():
        if layer in names and level not in graph.nodes:
            level = _closest_level(level)
        att[(attr, dim)] = (level, layer)
    new_schema = GisDimensionSchema(graphs, att, schema.olap_dims)

    rel: dict[tuple[str, str, str], set] = defaultdict(set)
    for a in overlay.associations:
        sub, geo = a.level.split("->")
        rel[(a.layer, _SUB_LEVEL[sub], _GEOM_LEVEL[geo])].add((a.cell_id, a.gid))
    rollups = {k: v for k, v in instance.rollups.items() if k[0] not in names}
    for k, v in rel.items():
        rollups[k] = frozenset(v)
    for n in names:
        cells_pt = frozenset()
        rollups.setdefault((n, POINT, NODE), cells_pt)
    return new_schema, GisDimensionInstance(new_schema, rollups, instance.alphas, instance.olap_rollups, True)


def _closest_level(level: str) -> str:
    lv = level.lower()
    if lv in ("line", "polyline"):
        return "polyline"
    if lv in ("node", "point"):
        return "node"
    return "polygon"


# ---------------------------------------------------------------------------
# GIS fact tables


@dataclass
class GisFactTable:
    level: str
    layer: str
    measures: tuple[str, ...]
    rows: dict[int, dict[str, float]] = field(default_factory=dict)

    def add(self, gid: int, values: Mapping[str, float] | Sequence[float]) -> None:
        if gid in self.rows:
            raise SchemaError(f"duplicate fact row for gid {gid} in {self.layer}")
        if not isinstance(values, Mapping):
            values = dict(zip(self.measures, values))
        if set(values) != set(self.measures):
            raise SchemaError(f"fact row for {gid} has measures {sorted(values)}, expected {list(self.measures)}")
        self.rows[gid] = dict(values)

    @classmethod
    def from_layer(cls, layer, measures: Sequence[str], level: str | None = None) -> "GisFactTable":
        """Fact table built from numeric layer attributes; gids lacking one are skipped."""
        kinds = layer.kinds
        lvl = level or ("polygon" if "polygon" in kinds else "polyline" if "polyline" in kinds else "node")
        t = cls(lvl, layer.name, tuple(measures))
        for gid in sorted(layer.geometries):
            attrs = layer.attributes.get(gid, {})
            vals = {m: attrs.get(m) for m in measures}
            if all(isinstance(v, (int, float)) for v in vals.values()):
                t.rows[gid] = vals
        return t


def ft(facts: GisFactTable | Iterable[GisFactTable], gid: int, layer: str) -> Optional[tuple]:
    tables = [facts] if isinstance(facts, GisFactTable) else list(facts)
    for t in tables:
        if t.layer == layer and gid in t.rows:
            return tuple(t.rows[gid][m] for m in t.measures)
    return None


# ---------------------------------------------------------------------------
# Star schema


def path_str(dim: str, path: Sequence[str]) -> str:
    return ".".join(f"[{p}]" for p in (dim, *path))


@dataclass
class Dimension:
    """OLAP dimension instance: a member tree, levels from coarsest to finest."""

    name: str
    levels: tuple[str, ...]
    all_name: str | None = None
    children: dict[tuple[str, ...], list[tuple[str, ...]]] = field(default_factory=dict)
    order: dict[tuple[str, ...], int] = field(default_factory=dict)

    def __post_init__(self):
        root = self.root
        self.children.setdefault(root, [])

    @property
    def root(self) -> tuple[str, ...]:
        return (self.all_name,) if self.all_name else ()

    @property
    def depth_offset(self) -> int:
        return 1 if self.all_name else 0

    def add_leaf(self, names: Sequence[str]) -> tuple[str, ...]:
        if len(names) != len(self.levels):
            raise SchemaError(f"{self.name}: leaf {names} does not match levels {self.levels}")
        path = self.root
        for n in names:
            child = path + (str(n),)
            if child not in self.children:
                self.children[child] = []
                self.children.setdefault(path, []).append(child)
            path = child
        return path

    def finalize(self) -> None:
        """Sort children by name and number members in hierarchy order."""
        for k in self.children:
            self.children[k].sort(key=lambda p: p[-1])
        self.order.clear()

        def walk(p):
            self.order[p] = len(self.order)
            for c in self.children.get(p, ()):
                walk(c)

        if self.all_name:
            walk(self.root)
        else:
            for c in sorted(self.children.get((), ()), key=lambda p: p[-1]):
                walk(c)

    def __contains__(self, path) -> bool:
        return tuple(path) in self.children

    def level_of(self, path: Sequence[str]) -> str:
        d = len(path) - self.depth_offset
        if d == 0:
            return "(All)"
        return self.levels[d - 1]

    def parent(self, path: Sequence[str]) -> tuple[str, ...] | None:
        path = tuple(path)
        if path == self.root or len(path) <= 1 and not self.all_name:
            return None
        return path[:-1]

    def is_leaf(self, path) -> bool:
        return not self.children.get(tuple(path))

    def members_at(self, level: str) -> list[tuple[str, ...]]:
        d = self.levels.index(level) + 1 + self.depth_offset
        return sorted((p for p in self.children if len(p) == d), key=lambda p: self.order.get(p, 0))

    def find(self, level: str, name: str) -> tuple[str, ...]:
        hits = [p for p in self.members_at(level) if p[-1] == name]
        if len(hits) != 1:
            raise UnmappedMemberError(f"{self.name}: {len(hits)} members named {name!r} at level {level}")
        return hits[0]

    def to_str(self, path) -> str:
        return path_str(self.name, path)


@dataclass
class Cube:
    name: str
    dimensions: dict[str, Dimension]
    measures: tuple[str, ...]
    # one column of leaf paths per dimension, one column per measure
    keys: dict[str, list[tuple[str, ...]]] = field(default_factory=dict)
    values: dict[str, np.ndarray] = field(default_factory=dict)
    _masks: dict = field(default_factory=dict, repr=False)

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.values.values()))) if self.values else 0

    def add_rows(self, rows: Iterable[Mapping]) -> None:
        keys = {d: [] for d in self.dimensions}
        vals = {m: [] for m in self.measures}
        for r in rows:
            for d, dim in self.dimensions.items():
                leaf = tuple(r[d])
                full = dim.root + leaf if dim.all_name and (not leaf or leaf[0] != dim.all_name) else leaf
                if full not in dim.children or not dim.is_leaf(full):
                    raise SchemaError(f"fact references unknown leaf {full} of {d}")
                keys[d].append(full)
            for m in self.measures:
                vals[m].append(float(r[m]))
        for d in self.dimensions:
            self.keys.setdefault(d, []).extend(keys[d])
        for m in self.measures:
            old = self.values.get(m, np.zeros(0))
            self.values[m] = np.concatenate([old, np.asarray(vals[m], dtype=float)])
        self._masks.clear()

    def mask(self, dim: str, path: Sequence[str]) -> np.ndarray:
        path = tuple(path)
        key = (dim, path)
        m = self._masks.get(key)
        if m is None:
            n = len(path)
            m = np.fromiter((k[:n] == path for k in self.keys[dim]), dtype=bool, count=self.n_rows)
            self._masks[key] = m
        return m

    def value(self, members: Mapping[str, Sequence[str]], measure: str) -> float:
        if measure not in self.values:
            raise SchemaError(f"cube {self.name} has no measure {measure!r}")
        sel = np.ones(self.n_rows, dtype=bool)
        for d, p in members.items():
            sel &= self.mask(d, p)
        return float(self.values[measure][sel].sum())

    def group(self, dim: str, level: str, measure: str) -> dict[tuple[str, ...], float]:
        d = self.dimensions[dim]
        return {p: self.value({dim: p}, measure) for p in d.members_at(level)}


@dataclass
class StarSchema:
    cubes: dict[str, Cube]

    def cube(self, name: str) -> Cube:
        try:
            return self.cubes[name]
        except KeyError:
            raise SchemaError(f"unknown cube {name!r}") from None

    @property
    def dimensions(self) -> dict[str, Dimension]:
        out = {}
        for c in self.cubes.values():
            out.update(c.dimensions)
        return out


# ---------------------------------------------------------------------------
# Piet schema document


@dataclass(frozen=True)
class SubPLevel:
    name: str
    table: str
    primaryKey: str = "id"
    uniqueIdColumn: str = "uniqueid"
    originalGeometryColumn: str = "originalgeometryid"


@dataclass(frozen=True)
class Property:
    name: str
    column: str
    type: str = "Double"


@dataclass(frozen=True)
class OlapTable:
    name: str
    id: str
    hierarchyNameField: str
    hierarchyAll: str


@dataclass(frozen=True)
class OLAPRelation:
    table: str
    gisId: str
    olapId: str
    olapDimensionName: str
    olapLevelName: str
    olapTable: OlapTable | None = None


@dataclass(frozen=True)
class LayerDesc:
    name: str
    table: str
    hasAll: bool = True
    primaryKey: str = "id"
    geometry: str = "geometry"
    descriptionField: str = "name"
    properties: tuple[Property, ...] = ()
    sublevels: tuple[str, ...] = ()
    olap: OLAPRelation | None = None
    file: str | None = None


@dataclass(frozen=True)
class MeasureDesc:
    name: str
    layer: str
    aggregator: str = "count"
    property: str | None = None


@dataclass
class PietSchema:
    name: str = "Piet-Schema"
    subplevels: dict[str, SubPLevel] = field(default_factory=dict)
    layers: dict[str, LayerDesc] = field(default_factory=dict)
    measures: dict[str, MeasureDesc] = field(default_factory=dict)
    warehouse: str | None = None
    root: Path | None = None

    def layer(self, name: str) -> LayerDesc:
        try:
            return self.layers[name]
        except KeyError:
            raise SchemaError(f"schema has no layer {name!r}") from None

    def measure(self, name: str) -> MeasureDesc:
        try:
            return self.measures[name]
        except KeyError:
            raise SchemaError(f"schema has no measure {name!r}") from None

    def check(self) -> list[str]:
        out = []
        for m in self.measures.values():
            if m.layer not in self.layers:
                out.append(f"measure {m.name} references unknown layer {m.layer}")
            if m.aggregator not in ("count", "sum", "avg", "min", "max", "length", "area"):
                out.append(f"measure {m.name} has unknown aggregator {m.aggregator}")
        for l in self.layers.values():
            for s in l.sublevels:
                if self.subplevels and s.lower() not in {k.lower() for k in self.subplevels}:
                    out.append(f"layer {l.name} uses unknown sub-level {s}")
        return out


_SUBP_ALIASES = ("Subpolygonization", "Subpoligonization")


def parse_piet_schema(text: str, root: Path | None = None) -> PietSchema:
    try:
        doc = ET.fromstring(text)
    except ET.ParseError as e:
        raise SchemaError(f"malformed schema document: {e}") from None
    s = PietSchema(name=doc.get("name", "Piet-Schema"), root=root, warehouse=doc.get("warehouse"))
    subp = None
    for tag in _SUBP_ALIASES:
        subp = doc.find(tag) if doc.tag != tag else doc
        if subp is not None:
            break
    if subp is not None:
        for el in subp.findall("SubPLevel"):
            lv = SubPLevel(**{k: v for k, v in el.attrib.items() if k in SubPLevel.__dataclass_fields__})
            s.subplevels[lv.name] = lv
    for el in doc.iter("Layer"):
        props = tuple(
            Property(p.get("name"), p.get("column", p.get("name")), p.get("type", "Double"))
            for p in el.findall("Properties/Property")
        )
        used = tuple(u.get("name") for u in el.findall("SubpolygonizationLevels/SubPUsedLevel"))
        olap = None
        rel = el.find("OLAPRelation")
        if rel is not None:
            ot = rel.find("OlapTable")
            olap = OLAPRelation(
                table=rel.get("table"),
                gisId=rel.get("gisId", "gisid"),
                olapId=rel.get("olapId", "olapid"),
                olapDimensionName=rel.get("olapDimensionName"),
                olapLevelName=rel.get("olapLevelName"),
                olapTable=None
                if ot is None
                else OlapTable(ot.get("name"), ot.get("id"), ot.get("hierarchyNameField"), ot.get("hierarchyAll")),
            )
        name = el.get("name")
        if not name:
            raise SchemaError("Layer element without name")
        s.layers[name] = LayerDesc(
            name=name,
            table=el.get("table", name),
            hasAll=el.get("hasAll", "true").lower() == "true",
            primaryKey=el.get("primaryKey", "id"),
            geometry=el.get("geometry", "geometry"),
            descriptionField=el.get("descriptionField", "name"),
            properties=props,
            sublevels=used,
            olap=olap,
            file=el.get("file"),
        )
    for el in doc.iter("Measure"):
        m = MeasureDesc(el.get("name"), el.get("layer"), el.get("aggregator", "count"), el.get("property"))
        s.measures[m.name] = m
    wh = doc.find("Warehouse")
    if wh is not None:
        s.warehouse = wh.get("path")
    problems = s.check()
    if problems:
        raise SchemaError("; ".join(problems))
    return s


def load_piet_schema(path: str | Path) -> PietSchema:
    path = Path(path)
    return parse_piet_schema(path.read_text(encoding="utf-8"), root=path.parent)


def schema_to_xml(s: PietSchema) -> str:
    root = ET.Element("PietSchema", name=s.name)
    if s.warehouse:
        ET.SubElement(root, "Warehouse", path=s.warehouse)
    sub = ET.SubElement(root, "Subpolygonization")
    for lv in s.subplevels.values():
        ET.SubElement(
            sub,
            "SubPLevel",
            name=lv.name,
            table=lv.table,
            primaryKey=lv.primaryKey,
            uniqueIdColumn=lv.uniqueIdColumn,
            originalGeometryColumn=lv.originalGeometryColumn,
        )
    for l in s.layers.values():
        attrs = dict(
            name=l.name,
            hasAll=str(l.hasAll).lower(),
            table=l.table,
            primaryKey=l.primaryKey,
            geometry=l.geometry,
            descriptionField=l.descriptionField,
        )
        if l.file:
            attrs["file"] = l.file
        el = ET.SubElement(root, "Layer", **attrs)
        props = ET.SubElement(el, "Properties")
        for p in l.properties:
            ET.SubElement(props, "Property", name=p.name, column=p.column, type=p.type)
        used = ET.SubElement(el, "SubpolygonizationLevels")
        for u in l.sublevels:
            ET.SubElement(used, "SubPUsedLevel", name=u)
        if l.olap:
            rel = ET.SubElement(
                el,
                "OLAPRelation",
                table=l.olap.table,
                gisId=l.olap.gisId,
                olapId=l.olap.olapId,
                olapDimensionName=l.olap.olapDimensionName,
                olapLevelName=l.olap.olapLevelName,
            )
            if l.olap.olapTable:
                t = l.olap.olapTable
                ET.SubElement(
                    rel, "OlapTable", name=t.name, id=t.id, hierarchyNameField=t.hierarchyNameField, hierarchyAll=t.hierarchyAll
                )
    for m in s.measures.values():
        attrs = dict(name=m.name, layer=m.layer, aggregator=m.aggregator)
        if m.property:
            attrs["property"] = m.property
        ET.SubElement(root, "Measure", **attrs)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


@dataclass(frozen=True)
class MappingRow:
    gisid: int
    olapid: str
    description: str = ""


def mapping_dict(rows: Iterable[MappingRow]) -> dict[int, MappingRow]:
    out = {}
    for r in rows:
        out[r.gisid] = r
    return out
