"""GISOLAP-QL: a GIS section piped into an MDX section."""

from .gis import (
    And,
    GisQuery,
    LayerRef,
    MeasureRef,
    MemberRef,
    Op,
    Or,
    Query,
    parse,
    parse_gis,
    print_gis,
    print_query,
)
from .mdx import (
    Children,
    Crossjoin,
    Hierarchize,
    MdxQuery,
    Member,
    PivotResult,
    SetExpr,
    TupleExpr,
    Union,
    drill,
    eval_mdx,
    parse_mdx,
    print_mdx,
    rollup,
)
from .planner import (
    GisPlan,
    GisResult,
    QueryOutcome,
    Relation,
    Session,
    execute_gis,
    injected_set,
    natural_join,
    plan_gis,
    rewrite_olap,
)

__all__ = [
    "And",
    "Children",
    "Crossjoin",
    "GisPlan",
    "GisQuery",
    "GisResult",
    "Hierarchize",
    "LayerRef",
    "MdxQuery",
    "MeasureRef",
    "Member",
    "MemberRef",
    "Op",
    "Or",
    "PivotResult",
    "Query",
    "QueryOutcome",
    "Relation",
    "Session",
    "SetExpr",
    "TupleExpr",
    "Union",
    "drill",
    "eval_mdx",
    "execute_gis",
    "injected_set",
    "natural_join",
    "parse",
    "parse_gis",
    "parse_mdx",
    "plan_gis",
    "print_gis",
    "print_mdx",
    "print_query",
    "rewrite_olap",
    "rollup",
]
