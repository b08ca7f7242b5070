"""``piet`` command line: gen, build, query, bench and inspect.

Exit codes: 0 ok, 1 usage, 2 data error, 3 resource cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import statistics
import sys
import time
from collections import defaultdict
from pathlib import Path
from typing import Sequence

from . import bench, engine, store
from .dims import load_piet_schema
from .errors import PietError
from .geom import BBox, Polygon
from .layer import ingest_layer, map_bbox
from .subdivision import DEFAULT_MAX_LINES, GridSpec, build_overlay
from .synth import MapSpec, generate, write_dataset

log = logging.getLogger("piet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _grid(text: str) -> GridSpec:
    try:
        return GridSpec.parse(text)
    except (ValueError, PietError) as e:
        raise argparse.ArgumentTypeError(str(e)) from None


# ---------------------------------------------------------------------------
# gen


def cmd_gen(a) -> int:
    spec = MapSpec(seed=a.seed, states=a.states, rivers=a.rivers, points=a.points, airports=a.airports,
                   west_heavy=a.west_heavy)
    layers = generate(spec)
    path = write_dataset(a.out, layers, a.seed, warehouse=not a.no_warehouse)
    counts = ", ".join(f"{k}={len(v)}" for k, v in sorted(layers.items()))
    print(f"wrote {path} ({counts})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# build


def _schema_layers(schema_path: Path, names: Sequence[str] | None):
    schema = load_piet_schema(schema_path)
    chosen = list(names) if names else list(schema.layers)
    layers = {}
    for n in chosen:
        desc = schema.layer(n)
        f = schema_path.parent / (desc.file or f"{n}.tsv")
        layers[n] = ingest_layer(f, n)
    return schema, layers


def cmd_build(a) -> int:
    schema_path = Path(a.schema)
    _, layers = _schema_layers(schema_path, a.layers.split(",") if a.layers else None)
    names = sorted(layers)
    if a.combos == "all":
        combos = store.layer_combinations(names)
    else:
        combos = []
        for c in a.combos.split(";"):
            parts = sorted(p.strip() for p in c.replace("+", ",").split(",") if p.strip())
            missing = [p for p in parts if p not in layers]
            if missing:
                raise UsageError(f"combination {c!r} names unknown layers {missing}")
            combos.append("+".join(parts))
    box = map_bbox(layers.values())
    root = Path(a.out) if a.out else schema_path.parent
    timing = []
    for combo in combos:
        chosen = [layers[n] for n in combo.split("+")]
        t0 = time.perf_counter()
        ov = build_overlay(chosen, box=box, grid=a.grid, max_lines=a.max_lines, n_jobs=a.threads)
        ms = (time.perf_counter() - t0) * 1e3
        store.save(ov, root)
        timing.append((combo, len(chosen), ms, len(ov.cells)))
        log.info("built %s in %.1f ms", combo, ms)
        print(f"{combo}\t{len(chosen)} layers\t{len(ov.cells)} cells\t{ms:.1f} ms")
    out = Path(a.timing) if a.timing else root / "build_timing.csv"
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["combo", "layers", "ms", "cells"])
        for combo, k, ms, n in timing:
            w.writerow([combo, k, f"{ms:.3f}", n])
        w.writerow([])
        w.writerow(["layers", "combos", "avg_ms", "total_ms"])
        by = defaultdict(list)
        for _, k, ms, _ in timing:
            by[k].append(ms)
        for k in sorted(by, reverse=True):
            w.writerow([k, len(by[k]), f"{statistics.fmean(by[k]):.3f}", f"{sum(by[k]):.3f}"])
    print(f"timing written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# query


def load_region(path: str | Path) -> engine.QueryRegion:
    lay = ingest_layer(path, "region")
    polys = [g for g in lay if isinstance(g, Polygon)]
    if not polys:
        raise PietError(f"{path}: a query region needs at least one polygon")
    return engine.QueryRegion(tuple(polys), Path(path).stem)


def _find_schema(a) -> Path:
    if a.schema:
        return Path(a.schema)
    for base in (Path(a.file).parent, Path.cwd()):
        if (base / "schema.xml").is_file():
            return base / "schema.xml"
    raise UsageError("no --schema given and no schema.xml next to the query or in the working directory")


def cmd_query(a) -> int:
    from .gisolapql import Session, parse
    from .gisolapql.gis import op_layers

    text = Path(a.file).read_text(encoding="utf-8")
    q = parse(text)
    schema_path = _find_schema(a)
    layers = None
    if q.gis is not None:
        layers = [s.layer for s in q.gis.select if hasattr(s, "layer")] + op_layers(q.gis.where)
        schema = load_piet_schema(schema_path)
        layers += [schema.measure(s.measure).layer for s in q.gis.select if hasattr(s, "measure")]
        layers = sorted(set(layers))
    session = Session.open(schema_path, a.store, layers) if layers else Session.open_olap(schema_path)
    region = load_region(a.region) if a.region else None
    ctx = engine.QueryContext()
    res = session.run(text, ctx, mode=a.mode, region=region, exact=a.exact)
    out = res.pivot.to_csv() if res.pivot is not None else res.gis.to_csv()
    if a.out:
        Path(a.out).write_text(out)
    else:
        sys.stdout.write(out)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if res.pivot is not None and res.gis is not None:
        print(f"mode={a.mode} assembly_ms={res.assembly_ms:.3f} execution_ms={res.execution_ms:.3f} "
              f"total_ms={res.total_ms:.3f} predicates={res.predicates}", file=sys.stderr)
    else:
        print(f"mode={a.mode} ms={res.total_ms:.3f} predicates={res.predicates}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(a) -> int:
    if a.schema:
        schema_path = Path(a.schema)
        root = Path(a.store) if a.store else schema_path.parent
        ov = store.load(root, store.find_combo(root, bench.BENCH_LAYERS))
        ws = bench.Workspace.from_overlay(ov, load_piet_schema(schema_path))
    else:
        spec = MapSpec(seed=a.seed, states=a.states, rivers=a.rivers, points=a.points, west_heavy=a.west_heavy)
        t0 = time.perf_counter()
        ws = bench.Workspace.synthetic(spec, a.grid, a.threads)
        print(f"overlay built in {(time.perf_counter() - t0) * 1e3:.0f} ms ({len(ws.overlay.cells)} cells)",
              file=sys.stderr)
    modes = a.modes.split(",") if a.modes else None
    timings = bench.run_suite(ws, a.suite, a.repeats, modes)
    out = bench.write_csv(timings, a.out)
    for t in timings:
        r = t.row()
        print(f"{r['query']:>4} {r['region'] or '-':>6} {r['mode']:>7} {r['mean_ms']:>10.3f} ms  "
              f"predicates={r['predicates']:<8} agree={r['agrees_with_naive']}")
    print(f"results written to {out}")
    bad = [t for t in timings if t.agrees is False]
    if bad:
        print(f"error: {len(bad)} runs disagree with the naive mode", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# ---------------------------------------------------------------------------
# inspect


def cmd_inspect(a) -> int:
    root = Path(a.store)
    combos = store.list_combos(root)
    if not a.combo:
        for c in combos:
            print(c)
        return EXIT_OK
    combo = a.combo if a.combo in combos else store.find_combo(root, a.combo.replace("+", ",").split(","))
    ov = store.load(root, combo)
    st = store.stats(ov)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subgeometry", "max", "min", "avg"])
    labels = {
        "lines": "carrier lines per rectangle",
        "points": "points per rectangle",
        "segments": "segments per rectangle",
        "polygons": "polygons per rectangle",
    }
    for k, label in labels.items():
        s = st["summary"][k]
        w.writerow([label, s["max"], s["min"], f"{s['avg']:.2f}"])
    print(f"# combination {combo}, grid {st['grid']}, {len(ov.cells)} cells, {len(ov.associations)} associations")
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="piet", description="Precomputed map overlay for spatial OLAP.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="write a seeded synthetic dataset")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--states", type=int, default=50)
    g.add_argument("--rivers", type=int, default=30)
    g.add_argument("--points", type=int, default=200, help="points per point layer")
    g.add_argument("--airports", type=int, default=None)
    g.add_argument("--west-heavy", action="store_true", help="denser volcanoes in the west")
    g.add_argument("--no-warehouse", action="store_true")
    g.add_argument("--out", default="data")
    g.set_defaults(fn=cmd_gen)

    b = sub.add_parser("build", help="precompute overlays for layer combinations")
    b.add_argument("--schema", required=True)
    b.add_argument("--grid", type=_grid, default=GridSpec(1, 1), help="RxC, e.g. 20x50")
    b.add_argument("--combos", default="all", help="'all' or 'a+b;a+b+c'")
    b.add_argument("--layers", default=None, help="comma-separated subset of schema layers")
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--max-lines", type=int, default=DEFAULT_MAX_LINES)
    b.add_argument("--out", default=None, help="store root (default: the schema directory)")
    b.add_argument("--timing", default=None)
    b.set_defaults(fn=cmd_build)

    q = sub.add_parser("query", help="run a GISOLAP-QL query")
    q.add_argument("--file", required=True)
    q.add_argument("--mode", choices=("piet", "rtree", "naive"), default="piet")
    q.add_argument("--region", default=None, help="polygon layer file used as query region")
    q.add_argument("--exact", action="store_true", help="clip cells crossing the region")
    q.add_argument("--schema", default=None)
    q.add_argument("--store", default=None)
    q.add_argument("--out", default=None)
    q.set_defaults(fn=cmd_query)

    be = sub.add_parser("bench", help="time the query suites in every mode")
    be.add_argument("--suite", choices=tuple(bench.SUITES), required=True)
    be.add_argument("--repeats", type=int, default=10)
    be.add_argument("--out", default="results.csv")
    be.add_argument("--modes", default=None, help="comma-separated subset of piet,rtree,naive")
    be.add_argument("--schema", default=None, help="use a built dataset instead of a generated map")
    be.add_argument("--store", default=None)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--states", type=int, default=50)
    be.add_argument("--rivers", type=int, default=30)
    be.add_argument("--points", type=int, default=200)
    be.add_argument("--west-heavy", action="store_true")
    be.add_argument("--grid", type=_grid, default=GridSpec(10, 10))
    be.add_argument("--threads", type=int, default=1)
    be.set_defaults(fn=cmd_bench)

    i = sub.add_parser("inspect", help="sub-geometry statistics of a stored combination")
    i.add_argument("--combo", default=None)
    i.add_argument("--store", default=".")
    i.set_defaults(fn=cmd_inspect)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(message)s")
        return a.fn(a)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PietError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
