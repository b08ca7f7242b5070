"""Plan the GIS section against the engine and inject its result into MDX."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .. import baseline, engine, naive
from ..dims import MappingRow, OLAPRelation, PietSchema, StarSchema
from ..errors import QueryError, SchemaError
from ..geom import PointGeom, Polygon as PolygonGeom
from ..subdivision import CellKind, Overlay
from .gis import And, GisQuery, LayerRef, MeasureRef, MemberRef, Op, Or, Query, op_layers, parse
from .mdx import Children, Crossjoin, Hierarchize, Member, MdxQuery, PivotResult, SetExpr, Union, eval_mdx


@dataclass(frozen=True)
class Relation:
    """A set of tuples of geometry ids, one column per layer."""

    columns: tuple[str, ...]
    rows: frozenset[tuple[int, ...]]

    def __len__(self) -> int:
        return len(self.rows)

    def project(self, cols: Sequence[str]) -> "Relation":
        idx = [self.columns.index(c) for c in cols]
        return Relation(tuple(cols), frozenset(tuple(r[i] for i in idx) for r in self.rows))

    def reorder(self, cols: Sequence[str]) -> "Relation":
        if set(cols) != set(self.columns):
            raise QueryError(f"cannot align columns {self.columns} with {tuple(cols)}")
        return self.project(cols)


def natural_join(a: Relation, b: Relation, warnings: list[str] | None = None) -> Relation:
    shared = [c for c in a.columns if c in b.columns]
    if not shared and warnings is not None:
        warnings.append(f"no shared layer between {a.columns} and {b.columns}; taking the cross product")
    extra = [c for c in b.columns if c not in shared]
    ia = [a.columns.index(c) for c in shared]
    ib = [b.columns.index(c) for c in shared]
    ie = [b.columns.index(c) for c in extra]
    index: dict[tuple, list[tuple]] = {}
    for r in b.rows:
        index.setdefault(tuple(r[i] for i in ib), []).append(tuple(r[i] for i in ie))
    rows = set()
    for r in a.rows:
        for tail in index.get(tuple(r[i] for i in ia), ()):
            rows.add(r + tail)
    return Relation(a.columns + tuple(extra), frozenset(rows))


def union(a: Relation, b: Relation) -> Relation:
    b = b.reorder(a.columns)
    return Relation(a.columns, a.rows | b.rows)


# ---------------------------------------------------------------------------
# Plans


MODES = ("piet", "rtree", "naive")

_DIM = {"Point": 0, "LineString": 1, "Polygon": 2}


def _dim(g) -> int:
    return 0 if isinstance(g, PointGeom) else 2 if isinstance(g, PolygonGeom) else 1


def geometric_predicate(name: str, sublevel: str, eps):
    """Exact predicate used by the rtree and naive modes."""
    d = _DIM[sublevel]
    if name == "intersection":
        return lambda a, b: naive.intersects_at(a, b, sublevel, eps)

    def contains(a, b):
        k = _dim(b)
        if d > k:
            return False  # b has no piece of that dimension
        if d < k:
            raise QueryError(
                f"contains at sub-level {sublevel} on a {type(b).__name__} is only defined over the overlay; "
                "use --mode piet"
            )
        return naive.contains(a, b, eps)

    return contains


def _rtree(overlay: Overlay, layer: str) -> baseline.RTree:
    cache = overlay.index.setdefault("rtree", {})
    if layer not in cache:
        cache[layer] = baseline.build_from_geometries(overlay.layers[layer].geometries.values())
    return cache[layer]


def op_pairs(overlay: Overlay, op: Op, mode: str, ctx) -> set[tuple[int, int]]:
    a, b = op.left, op.right
    a_ids = [a.gid] if isinstance(a, MemberRef) else None
    b_ids = [b.gid] if isinstance(b, MemberRef) else None
    if mode == "piet":
        fn = engine.region_intersection if op.name == "intersection" else engine.region_contains
        return fn(overlay, a.layer, b.layer, op.sublevel, a_ids=a_ids, b_ids=b_ids)
    pred = geometric_predicate(op.name, op.sublevel, overlay.eps)
    la, lb = overlay.layers[a.layer], overlay.layers[b.layer]
    if mode == "naive":
        ga = [la[i] for i in (a_ids if a_ids is not None else sorted(la.geometries))]
        gb = [lb[i] for i in (b_ids if b_ids is not None else sorted(lb.geometries))]
        counter = naive.PredicateCounter()
        out = naive.naive_join(ga, gb, pred, counter)
        ctx.tick(counter.count)
        return out
    if mode != "rtree":
        raise QueryError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    ta = _rtree(overlay, a.layer) if a_ids is None else baseline.build_from_geometries([la[i] for i in a_ids])
    tb = _rtree(overlay, b.layer) if b_ids is None else baseline.build_from_geometries([lb[i] for i in b_ids])
    stats = baseline.Stats()
    out = baseline.spatial_join(ta, tb, pred, stats)
    ctx.tick(stats.predicates)
    return out


@dataclass(frozen=True)
class OpStep:
    op: Op

    def run(self, overlay: Overlay, ctx, mode: str = "piet") -> Relation:
        a, b = self.op.left, self.op.right
        if a.layer == b.layer:
            raise QueryError(f"{self.op.name} relates layer {a.layer} with itself; use two layers")
        return Relation((a.layer, b.layer), frozenset(op_pairs(overlay, self.op, mode, ctx)))

    def describe(self, depth: int = 0) -> str:
        fn = "region_intersection" if self.op.name == "intersection" else "region_contains"
        return "  " * depth + f"{fn}({self.op.left}, {self.op.right}, {self.op.sublevel})"


@dataclass(frozen=True)
class JoinStep:
    parts: tuple

    def run(self, overlay, ctx, mode: str = "piet") -> Relation:
        rel = self.parts[0].run(overlay, ctx, mode)
        for p in self.parts[1:]:
            rel = natural_join(rel, p.run(overlay, ctx, mode), ctx.warnings)
        return rel

    def describe(self, depth: int = 0) -> str:
        return "\n".join(["  " * depth + "join"] + [p.describe(depth + 1) for p in self.parts])


@dataclass(frozen=True)
class UnionStep:
    parts: tuple

    def run(self, overlay, ctx, mode: str = "piet") -> Relation:
        rel = self.parts[0].run(overlay, ctx, mode)
        for p in self.parts[1:]:
            rel = union(rel, p.run(overlay, ctx, mode))
        return rel

    def describe(self, depth: int = 0) -> str:
        return "\n".join(["  " * depth + "union"] + [p.describe(depth + 1) for p in self.parts])


@dataclass(frozen=True)
class ScanStep:
    """All geometries of a layer (used for SELECT layers absent from WHERE)."""

    layer: str

    def run(self, overlay, ctx, mode: str = "piet") -> Relation:
        return Relation((self.layer,), frozenset((g,) for g in overlay.layers[self.layer].geometries))

    def describe(self, depth: int = 0) -> str:
        return "  " * depth + f"scan({self.layer})"


@dataclass(frozen=True)
class GisPlan:
    root: object
    layers: tuple[str, ...]
    measures: tuple[str, ...]

    def describe(self) -> str:
        return self.root.describe() if self.root is not None else "(no condition)"


def _plan_cond(c) -> object:
    if isinstance(c, Op):
        return OpStep(c)
    if isinstance(c, And):
        return JoinStep(tuple(_plan_cond(i) for i in c.items))
    if isinstance(c, Or):
        return UnionStep(tuple(_plan_cond(i) for i in c.items))
    raise TypeError(c)


def plan_gis(ast: GisQuery, schema: PietSchema | None = None) -> GisPlan:
    layers = tuple(s.layer for s in ast.select if isinstance(s, LayerRef))
    measures = tuple(s.measure for s in ast.select if isinstance(s, MeasureRef))
    if schema is not None:
        for name in layers + tuple(op_layers(ast.where)):
            schema.layer(name)
        for m in measures:
            schema.measure(m)
    root = _plan_cond(ast.where) if ast.where is not None else None
    return GisPlan(root, layers, measures)


@dataclass
class GisResult:
    columns: tuple[str, ...]
    rows: list[tuple]
    relation: Relation
    warnings: list[str] = field(default_factory=list)

    def ids(self, layer: str) -> list[int]:
        i = self.columns.index(layer)
        return sorted({r[i] for r in self.rows})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
        return buf.getvalue()


def _sizes(overlay: Overlay, md, gids: list[int], mode: str, region, exact: bool, ctx) -> list[float]:
    kind = md.aggregator
    lay = overlay.layers[md.layer]
    if region is not None:
        if mode == "piet":
            res = engine.eval_in_query_region(
                overlay, region, md.layer, engine.Aggregator(kind), mode="exact" if exact else "fast",
                group_by="gid", ids=gids, ctx=ctx,
            )
            if not exact and not all(res.exact.values()):
                ctx.warnings.append(f"{md.name}: cells crossing the query region counted whole (fast mode)")
            return [res.values.get(g, 0.0) for g in gids]
        clip = naive.clipped_length if kind == "length" else naive.clipped_area
        return [clip(lay[g], region.polygons) if kind == "area" else clip(lay[g], region.polygons, overlay.eps)
                for g in gids]
    if mode == "piet":
        ck = CellKind.LINE if kind == "length" else CellKind.POLYGON
        return [math.fsum(overlay.cells[c].length if kind == "length" else overlay.cells[c].area
                          for c in overlay.cells_of(md.layer, g, ck)) for g in gids]
    return [lay[g].length if kind == "length" else lay[g].area for g in gids]


def _measure_value(
    overlay: Overlay, md, gids: Iterable[int], mode: str = "piet", region=None, exact: bool = False, ctx=None
) -> Optional[float]:
    gids = sorted(set(gids))
    kind = md.aggregator
    if kind == "count":
        return len(gids)
    if kind in ("length", "area"):
        return math.fsum(_sizes(overlay, md, gids, mode, region, exact, ctx))
    attrs = overlay.layers[md.layer].attributes
    prop = md.property or md.name
    vals = [attrs.get(g, {}).get(prop) for g in gids]
    vals = [float(v) for v in vals if isinstance(v, (int, float))]
    if not vals:
        return None
    if kind == "sum":
        return math.fsum(vals)
    if kind == "avg":
        return math.fsum(vals) / len(vals)
    return min(vals) if kind == "min" else max(vals)


def ids_in_region(overlay: Overlay, layer: str, region: engine.QueryRegion, mode: str, ctx) -> set[int]:
    """Geometries of ``layer`` meeting the closed query region."""
    if mode == "piet":
        res = engine.eval_in_query_region(overlay, region, layer, engine.Aggregator("count"), group_by="gid", ctx=ctx)
        return set(res.values)
    lay = overlay.layers[layer]
    test = lambda g: naive.in_region(g, region.polygons, overlay.eps)
    if mode == "naive":
        ctx.tick(len(lay))
        return {g for g in lay.geometries if test(lay[g])}
    stats = baseline.Stats()
    ids = baseline.range_query(_rtree(overlay, layer), baseline.Mbr.of(region.bbox()), lambda e: test(e.obj), stats)
    ctx.tick(stats.predicates)
    return set(ids)


def execute_gis(
    plan: GisPlan,
    overlay: Overlay,
    schema: PietSchema | None = None,
    ctx: engine.QueryContext | None = None,
    mode: str = "piet",
    region: engine.QueryRegion | None = None,
    exact: bool = False,
) -> GisResult:
    """Evaluate a plan; ``mode`` picks the join strategy (piet, rtree or naive).

    With a query ``region`` only geometries meeting it are kept in every
    column, and length/area measures count the part inside the region
    (crossing cells whole unless ``exact``).
    """
    if mode not in MODES:
        raise QueryError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    ctx = ctx if ctx is not None else engine.current_context()
    rel = plan.root.run(overlay, ctx, mode) if plan.root is not None else Relation((), frozenset({()}))
    for name in plan.layers:
        if name not in rel.columns:
            ctx.warnings.append(f"layer {name} does not appear in WHERE; all its geometries are listed")
            rel = natural_join(rel, ScanStep(name).run(overlay, ctx))
    if region is not None:
        keep = {c: ids_in_region(overlay, c, region, mode, ctx) for c in rel.columns}
        rel = Relation(rel.columns, frozenset(r for r in rel.rows if all(g in keep[c] for c, g in zip(rel.columns, r))))
    if not plan.measures:
        proj = rel.project(plan.layers)
        return GisResult(plan.layers, sorted(proj.rows), rel, list(ctx.warnings))
    if schema is None:
        raise QueryError("measures need a Piet schema")
    mds = [schema.measure(m) for m in plan.measures]
    for md in mds:
        if md.layer not in rel.columns:
            raise QueryError(f"measure {md.name} aggregates layer {md.layer}, which the query does not relate")
    key_idx = [rel.columns.index(c) for c in plan.layers]
    groups: dict[tuple, list[tuple]] = {}
    for r in rel.rows:
        groups.setdefault(tuple(r[i] for i in key_idx), []).append(r)
    rows = []
    for k in sorted(groups):
        vals = []
        for md in mds:
            j = rel.columns.index(md.layer)
            vals.append(_measure_value(overlay, md, (r[j] for r in groups[k]), mode, region, exact, ctx))
        rows.append(k + tuple(vals))
    return GisResult(plan.layers + plan.measures, rows, rel, list(ctx.warnings))


# ---------------------------------------------------------------------------
# OLAP rewrite


def _split_path(text: str) -> tuple[str, ...]:
    text = text.strip()
    if text.startswith("["):
        parts = []
        for chunk in text.split("].["):
            parts.append(chunk.strip("[]"))
        return tuple(parts)
    return tuple(p for p in text.split(".") if p)


def member_paths(
    gids: Iterable[int],
    mapping: Mapping[int, MappingRow],
    relation: OLAPRelation,
    star: StarSchema | None = None,
    warnings: list[str] | None = None,
) -> list[tuple[str, ...]]:
    """Full member paths (dimension first) for the mapped geometry ids."""
    if relation.olapTable is None or not relation.olapTable.hierarchyAll:
        raise SchemaError(f"OLAP relation {relation.table} has no hierarchyAll")
    all_path = _split_path(relation.olapTable.hierarchyAll)
    out = []
    for g in sorted(set(gids)):
        row = mapping.get(g)
        if row is None:
            if warnings is not None:
                warnings.append(f"geometry {g} has no OLAP member; skipped")
            continue
        rel = _split_path(row.olapid)
        if star is not None and len(rel) == 1:
            dim = star.dimensions.get(all_path[0])
            if dim is not None:
                try:
                    found = dim.find(relation.olapLevelName, rel[0])
                    out.append((all_path[0],) + found)
                    continue
                except Exception:
                    if warnings is not None:
                        warnings.append(f"member {row.olapid} not found at level {relation.olapLevelName}")
                    continue
        out.append(all_path + rel)
    return sorted(set(out))


def injected_set(paths: Sequence[tuple[str, ...]]):
    """Hierarchize(Union(...Union({a.Children}, {b.Children})..., {z.Children}))."""
    if not paths:
        return SetExpr(())
    terms = [SetExpr((Children(Member(p)),)) for p in paths]
    acc = terms[0]
    for t in terms[1:]:
        acc = Union(acc, t)
    return Hierarchize(acc)


def rewrite_olap(
    gids: Iterable[int],
    mapping: Mapping[int, MappingRow],
    mdx: MdxQuery,
    relation: OLAPRelation,
    star: StarSchema | None = None,
    warnings: list[str] | None = None,
) -> MdxQuery:
    """Inject the members matched by the GIS section into the rows axis."""
    paths = member_paths(gids, mapping, relation, star, warnings)
    if not paths:
        rows = SetExpr(())
    else:
        rows = Crossjoin(injected_set(paths), mdx.rows)
    return MdxQuery(mdx.columns, rows, mdx.cube, mdx.slicer)


# ---------------------------------------------------------------------------
# Sessions


@dataclass
class QueryOutcome:
    query: Query
    gis: Optional[GisResult]
    mdx: Optional[MdxQuery]
    pivot: Optional[PivotResult]
    assembly_ms: float
    execution_ms: float
    warnings: list[str]
    predicates: int

    @property
    def total_ms(self) -> float:
        return self.assembly_ms + self.execution_ms


class Session:
    """Everything a query needs: schema, overlay, warehouse and mappings."""

    def __init__(
        self,
        overlay: Overlay | None,
        schema: PietSchema | None = None,
        star: StarSchema | None = None,
        mappings: Mapping[str, Mapping[int, MappingRow]] | None = None,
    ):
        self.overlay = overlay
        self.schema = schema
        self.star = star
        self.mappings = dict(mappings or {})

    @classmethod
    def open(cls, schema_path: str | Path, store_root: str | Path | None = None, layers: Sequence[str] | None = None):
        from ..dims import load_piet_schema, mapping_dict
        from ..store import find_combo, load, load_mapping, load_warehouse

        schema = load_piet_schema(schema_path)
        root = Path(schema_path).parent
        store_root = Path(store_root) if store_root else root
        names = list(layers) if layers else list(schema.layers)
        overlay = load(store_root, find_combo(store_root, names))
        star = None
        if schema.warehouse:
            star = load_warehouse(root / schema.warehouse)
        mappings = {}
        for l in schema.layers.values():
            if l.olap is not None and l.olap.table:
                p = root / l.olap.table
                if not p.suffix:
                    p = p.with_suffix(".csv")
                if p.exists():
                    mappings[l.name] = mapping_dict(load_mapping(p))
        return cls(overlay, schema, star, mappings)

    @classmethod
    def open_olap(cls, schema_path: str | Path):
        """A session for pure MDX queries: warehouse only, no overlay."""
        from ..dims import load_piet_schema
        from ..store import load_warehouse

        schema = load_piet_schema(schema_path)
        if not schema.warehouse:
            raise SchemaError("schema names no warehouse")
        return cls(None, schema, load_warehouse(Path(schema_path).parent / schema.warehouse))

    def _olap_layer(self, gis: GisResult) -> Optional[str]:
        if self.schema is None:
            return None
        for c in gis.columns:
            desc = self.schema.layers.get(c)
            if desc is not None and desc.olap is not None:
                return c
        return None

    def run(
        self,
        text: str,
        ctx: engine.QueryContext | None = None,
        mode: str = "piet",
        region: engine.QueryRegion | None = None,
        exact: bool = False,
    ) -> QueryOutcome:
        ctx = ctx if ctx is not None else engine.QueryContext()
        t0 = time.perf_counter()
        q = parse(text)
        gis = None
        mdx = q.olap
        if q.gis is not None:
            if self.overlay is None:
                raise QueryError("no overlay loaded")
            gis = execute_gis(plan_gis(q.gis, self.schema), self.overlay, self.schema, ctx, mode, region, exact)
            if mdx is not None:
                layer = self._olap_layer(gis)
                if layer is None:
                    raise QueryError("no selected layer has an OLAP relation to inject")
                rel = self.schema.layers[layer].olap
                mdx = rewrite_olap(gis.ids(layer), self.mappings.get(layer, {}), mdx, rel, self.star, ctx.warnings)
        t1 = time.perf_counter()
        pivot = None
        if mdx is not None:
            if self.star is None:
                raise QueryError("no warehouse loaded for the OLAP section")
            pivot = eval_mdx(mdx, self.star)
        t2 = time.perf_counter()
        return QueryOutcome(q, gis, mdx, pivot, (t1 - t0) * 1e3, (t2 - t1) * 1e3, list(ctx.warnings), ctx.predicates)
