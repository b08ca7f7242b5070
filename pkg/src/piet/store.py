"""Flat-file persistence for layers, overlays, mappings and the warehouse.

Layout under a data root::

    layers/<name>.tsv
    overlay/<combo>/manifest.json
    overlay/<combo>/gis_subp_{point,linestring,polygon}_<combo>.csv
    overlay/<combo>/gis_pre_{point,linestring,polygon}_<combo>.csv
    overlay/<combo>/carriers_<combo>.csv, gridstats_<combo>.csv
    mapping/<table>.csv          (gisid, olapid, description)
    warehouse/cube.json + dimension and fact CSVs
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .carrier import CarrierSet
from .dims import Cube, Dimension, MappingRow, StarSchema
from .errors import ManifestMismatchError, MissingCombinationError, StoreError
from .geom import BBox, EpsilonConfig, Line, Point2
from .layer import Layer, ingest_layer, write_layer
from .subdivision import (
    Association,
    Cell,
    CellKind,
    GridCellStats,
    GridSpec,
    Overlay,
    combo_id,
)

FORMAT_VERSION = 1

__all__ = [
    "ingest_layer",
    "save",
    "load",
    "list_combos",
    "layer_combinations",
    "stats",
    "load_mapping",
    "save_mapping",
    "load_warehouse",
    "save_warehouse",
]


def _fmt_coords(coords: Sequence[Point2]) -> str:
    return ",".join(f"{p.x!r} {p.y!r}" for p in coords)


def _parse_coords(text: str) -> tuple[Point2, ...]:
    out = []
    for chunk in text.split(","):
        x, y = chunk.split()
        out.append(Point2(float(x), float(y)))
    return tuple(out)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split()) if text.strip() else ()


def _overlay_dir(root: Path, combo: str) -> Path:
    return Path(root) / "overlay" / combo


def save(overlay: Overlay, root: str | Path, extra: Mapping | None = None) -> Path:
    """Write ``overlay`` under ``root``; returns the combination directory."""
    combo = overlay.combo
    d = _overlay_dir(Path(root), combo)
    d.mkdir(parents=True, exist_ok=True)
    for kind in CellKind:
        with open(d / f"gis_subp_{kind.table}_{combo}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id", "row", "col", "coords", "lines", "edge_refs", "node_refs"])
            for c in overlay.cells:
                if c.kind is kind:
                    w.writerow(
                        [
                            c.cell_id,
                            c.grid_cell[0],
                            c.grid_cell[1],
                            _fmt_coords(c.coords),
                            " ".join(map(str, c.lines)),
                            " ".join(map(str, c.edge_refs)),
                            " ".join(map(str, c.node_refs)),
                        ]
                    )
    kind_of = {c.cell_id: c.kind for c in overlay.cells}
    writers = {}
    files = []
    try:
        for kind in CellKind:
            f = open(d / f"gis_pre_{kind.table}_{combo}.csv", "w", newline="")
            files.append(f)
            w = csv.writer(f)
            w.writerow(["uniqueid", "layer", "originalgeometryid", "level"])
            writers[kind] = w
        for a in overlay.associations:
            writers[kind_of[a.cell_id]].writerow([a.cell_id, a.layer, a.gid, a.level])
    finally:
        for f in files:
            f.close()
    with open(d / f"carriers_{combo}.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["index", "a", "b", "c", "sources"])
        for i, ln in enumerate(overlay.carriers.lines):
            srcs = " ".join(f"{l}:{g}" for l, g in sorted(overlay.carriers.provenance[ln]))
            w.writerow([i, repr(ln.a), repr(ln.b), repr(ln.c), srcs])
    with open(d / f"gridstats_{combo}.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "col", "lines", "points", "segments", "polygons"])
        for rc in sorted(overlay.stats):
            s = overlay.stats[rc]
            w.writerow([rc[0], rc[1], s.lines, s.points, s.segments, s.polygons])
    for name, layer in overlay.layers.items():
        write_layer(layer, d / f"layer_{name}.tsv")
    manifest = {
        "version": FORMAT_VERSION,
        "combo": combo,
        "layers": sorted(overlay.layers),
        "grid": [overlay.grid.rows, overlay.grid.cols],
        "box": [overlay.box.xmin, overlay.box.ymin, overlay.box.xmax, overlay.box.ymax],
        "epsilons": overlay.eps.as_dict(),
        "n_cells": len(overlay.cells),
        "n_associations": len(overlay.associations),
    }
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def list_combos(root: str | Path) -> list[str]:
    d = Path(root) / "overlay"
    if not d.is_dir():
        return []
    return sorted(p.name for p in d.iterdir() if (p / "manifest.json").is_file())


def read_manifest(root: str | Path, combo: str) -> dict:
    f = _overlay_dir(Path(root), combo) / "manifest.json"
    if not f.is_file():
        raise MissingCombinationError(f"no overlay stored for combination {combo!r} under {root}")
    return json.loads(f.read_text())


def find_combo(root: str | Path, layers: Iterable[str]) -> str:
    """Smallest stored combination covering ``layers``."""
    need = set(layers)
    best = None
    for c in list_combos(root):
        have = set(c.split("+"))
        if need <= have and (best is None or len(have) < len(best.split("+"))):
            best = c
    if best is None:
        raise MissingCombinationError(f"no stored overlay covers layers {sorted(need)}")
    return best


def load(root: str | Path, combo: str, eps: EpsilonConfig | None = None) -> Overlay:
    m = read_manifest(root, combo)
    if m.get("version") != FORMAT_VERSION:
        raise ManifestMismatchError(f"overlay {combo} has format version {m.get('version')}, expected {FORMAT_VERSION}")
    stored = EpsilonConfig(**m["epsilons"])
    if eps is not None and eps != stored:
        raise ManifestMismatchError(
            f"overlay {combo} was built with epsilons {stored.as_dict()}, requested {eps.as_dict()}"
        )
    d = _overlay_dir(Path(root), combo)
    cells: dict[int, Cell] = {}
    for kind in CellKind:
        with open(d / f"gis_subp_{kind.table}_{combo}.csv", newline="") as f:
            for r in csv.DictReader(f):
                cid = int(r["id"])
                cells[cid] = Cell(
                    cid,
                    kind,
                    _parse_coords(r["coords"]),
                    (int(r["row"]), int(r["col"])),
                    _ints(r["lines"]),
                    _ints(r["edge_refs"]),
                    _ints(r["node_refs"]),
                )
    ids = sorted(cells)
    if ids != list(range(len(ids))):
        raise StoreError(f"overlay {combo}: cell ids are not contiguous")
    layers = {name: ingest_layer(d / f"layer_{name}.tsv", name) for name in m["layers"]}
    assocs = []
    for kind in CellKind:
        with open(d / f"gis_pre_{kind.table}_{combo}.csv", newline="") as f:
            for r in csv.DictReader(f):
                a = Association(int(r["uniqueid"]), r["layer"], int(r["originalgeometryid"]), r["level"])
                if a.cell_id not in cells or a.layer not in layers or a.gid not in layers[a.layer]:
                    raise StoreError(f"overlay {combo}: dangling association {a}")
                assocs.append(a)
    assocs.sort(key=lambda a: (a.cell_id, a.layer, a.gid))
    cs = CarrierSet()
    with open(d / f"carriers_{combo}.csv", newline="") as f:
        for r in csv.DictReader(f):
            ln = Line(float(r["a"]), float(r["b"]), float(r["c"]))
            srcs = []
            for tok in r["sources"].split():
                l, g = tok.rsplit(":", 1)
                srcs.append((l, int(g)))
            cs.lines.append(ln)
            cs.provenance[ln] = frozenset(srcs)
    st = {}
    with open(d / f"gridstats_{combo}.csv", newline="") as f:
        for r in csv.DictReader(f):
            rc = (int(r["row"]), int(r["col"]))
            st[rc] = GridCellStats(rc, int(r["lines"]), int(r["points"]), int(r["segments"]), int(r["polygons"]))
    return Overlay(
        layers=layers,
        box=BBox(*m["box"]),
        grid=GridSpec(*m["grid"]),
        eps=stored,
        carriers=cs,
        cells=[cells[i] for i in ids],
        associations=assocs,
        stats=st,
    )


def layer_combinations(names: Sequence[str], sizes: Iterable[int] | None = None) -> list[str]:
    """Combination ids of the given sizes (default: every size from 2 up)."""
    names = sorted(names)
    if sizes is None:
        sizes = range(2, len(names) + 1) if len(names) > 1 else [1]
    out = []
    for k in sizes:
        for combo in combinations(names, k):
            out.append(combo_id(combo))
    return out


def stats(overlay: Overlay) -> dict:
    """Per-grid-cell counts of carrier lines, points, segments and polygons."""
    rows = [overlay.stats[rc] for rc in sorted(overlay.stats)]
    summary = {}
    for col in ("lines", "points", "segments", "polygons"):
        vals = [getattr(s, col) for s in rows]
        summary[col] = {
            "max": max(vals) if vals else 0,
            "min": min(vals) if vals else 0,
            "avg": statistics.fmean(vals) if vals else 0.0,
            "total": sum(vals),
        }
    return {"combo": overlay.combo, "grid": str(overlay.grid), "cells": rows, "summary": summary}


# ---------------------------------------------------------------------------
# GIS-OLAP mapping tables


def load_mapping(path: str | Path) -> list[MappingRow]:
    out = []
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            out.append(MappingRow(int(r["gisid"]), r["olapid"], r.get("description", "")))
    return out


def save_mapping(rows: Iterable[MappingRow], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["gisid", "olapid", "description"])
        for r in rows:
            w.writerow([r.gisid, r.olapid, r.description])


# ---------------------------------------------------------------------------
# Warehouse


def load_warehouse(path: str | Path) -> StarSchema:
    """Read ``cube.json`` and the CSV tables it names.

    ``cube.json`` holds a list of cubes, each with ``dimensions`` (name,
    ``all`` member name or null, ``levels`` coarsest first, ``table`` and
    ``key`` column), ``measures`` and a ``facts`` table whose columns are
    the dimension keys plus the measures.
    """
    path = Path(path)
    meta_file = path / "cube.json" if path.is_dir() else path
    base = meta_file.parent
    meta = json.loads(meta_file.read_text())
    cubes = {}
    for cm in meta["cubes"] if "cubes" in meta else [meta]:
        dims: dict[str, Dimension] = {}
        leaf_of: dict[str, dict[str, tuple[str, ...]]] = {}
        for dm in cm["dimensions"]:
            dim = Dimension(dm["name"], tuple(dm["levels"]), dm.get("all"))
            table = {}
            with open(base / dm["table"], newline="") as f:
                for r in csv.DictReader(f):
                    table[r[dm["key"]]] = dim.add_leaf([r[lv] for lv in dm["levels"]])
            dim.finalize()
            dims[dim.name] = dim
            leaf_of[dim.name] = table
        cube = Cube(cm["name"], dims, tuple(cm["measures"]))
        rows = []
        with open(base / cm["facts"], newline="") as f:
            for r in csv.DictReader(f):
                row = {}
                for dm in cm["dimensions"]:
                    k = r[dm["key"]]
                    if k not in leaf_of[dm["name"]]:
                        raise StoreError(f"fact row references unknown {dm['name']} key {k!r}")
                    row[dm["name"]] = leaf_of[dm["name"]][k]
                for mname in cube.measures:
                    v = float(r[mname])
                    if not math.isfinite(v):
                        raise StoreError(f"non-finite measure {mname} in fact table")
                    row[mname] = v
                rows.append(row)
        cube.add_rows(rows)
        cubes[cube.name] = cube
    return StarSchema(cubes)


def save_warehouse(
    path: str | Path,
    cube_name: str,
    dimensions: Sequence[Mapping],
    dim_rows: Mapping[str, Sequence[Mapping]],
    measures: Sequence[str],
    facts: Sequence[Mapping],
) -> Path:
    """Write a warehouse readable by :func:`load_warehouse`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta_dims = []
    for dm in dimensions:
        table = f"dim_{dm['name'].lower().replace(' ', '_')}.csv"
        cols = [dm["key"], *dm["levels"]]
        with open(path / table, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=cols)
            w.writeheader()
            for r in dim_rows[dm["name"]]:
                w.writerow({c: r[c] for c in cols})
        meta_dims.append({**dm, "table": table})
    fact_file = f"fact_{cube_name.lower().replace(' ', '_')}.csv"
    cols = [dm["key"] for dm in dimensions] + list(measures)
    with open(path / fact_file, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols)
        w.writeheader()
        for r in facts:
            w.writerow({c: r[c] for c in cols})
    meta = {"cubes": [{"name": cube_name, "dimensions": meta_dims, "measures": list(measures), "facts": fact_file}]}
    (path / "cube.json").write_text(json.dumps(meta, indent=2) + "\n")
    return path
