"""Spatial OLAP over a precomputed map overlay."""

from .engine import (
    Aggregator,
    QueryContext,
    QueryRegion,
    RegionIds,
    decide_summability,
    eval_in_query_region,
    eval_summable,
    predicate_eval_counter,
    region_contains,
    region_intersection,
    rollup_map,
)
from .errors import PietError
from .estimator import PietOverlay
from .geom import BBox, EpsilonConfig, Line, PointGeom, Polygon, Polyline
from .layer import Layer, ingest_layer, write_layer
from .subdivision import Cell, CellKind, GridSpec, Overlay, arrange, build_overlay, csp
from .topo import TopologicalInvariant, build_invariant, invariant_equal_up_to_relabel

__version__ = "0.1.0"

__all__ = [
    "Aggregator",
    "BBox",
    "Cell",
    "CellKind",
    "EpsilonConfig",
    "GridSpec",
    "Layer",
    "Line",
    "Overlay",
    "PietError",
    "PietOverlay",
    "PointGeom",
    "Polygon",
    "Polyline",
    "QueryContext",
    "QueryRegion",
    "RegionIds",
    "TopologicalInvariant",
    "arrange",
    "build_invariant",
    "build_overlay",
    "csp",
    "decide_summability",
    "eval_in_query_region",
    "eval_summable",
    "ingest_layer",
    "invariant_equal_up_to_relabel",
    "predicate_eval_counter",
    "region_contains",
    "region_intersection",
    "rollup_map",
    "write_layer",
]
