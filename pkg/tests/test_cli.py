import csv

import pytest

from piet import synth
from piet.cli import main

S, R, C, V, ST = synth.STATES, synth.RIVERS, synth.CITIES, synth.VOLCANOES, synth.STORES
FOUR = ",".join([S, R, C, ST])


def _files(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--seed", "5", "--states", "6", "--rivers", "3", "--points", "20", "--out", str(d)]) == 0
    assert main(["build", "--schema", str(d / "schema.xml"), "--layers", FOUR, "--grid", "2x2"]) == 0
    return d


def test_gen_defaults_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen", "--seed", "42", "--out", str(a)]) == 0
    out = capsys.readouterr().out
    assert f"{S}=50" in out and f"{R}=30" in out and f"{C}=200" in out and f"{V}=200" in out
    assert main(["gen", "--seed", "42", "--out", str(b)]) == 0
    assert _files(a) == _files(b)
    assert main(["gen", "--seed", "43", "--out", str(tmp_path / "c")]) == 0
    assert _files(tmp_path / "c") != _files(a)


def test_build_all_combos(dataset):
    combos = sorted(p.name for p in (dataset / "overlay").iterdir())
    assert len(combos) == 11
    with open(dataset / "build_timing.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["combo", "layers", "ms", "cells"]
    assert len([r for r in rows[1:12]]) == 11
    summary = rows[rows.index([]) + 1:]
    assert summary[0] == ["layers", "combos", "avg_ms", "total_ms"]
    assert [(r[0], r[1]) for r in summary[1:]] == [("4", "1"), ("3", "4"), ("2", "6")]


def test_build_named_combos(tmp_path):
    assert main(["gen", "--seed", "1", "--states", "4", "--rivers", "2", "--points", "5", "--out", str(tmp_path)]) == 0
    schema = str(tmp_path / "schema.xml")
    assert main(["build", "--schema", schema, "--combos", f"{S}+{R};{S}+{C}", "--timing", str(tmp_path / "t.csv")]) == 0
    assert sorted(p.name for p in (tmp_path / "overlay").iterdir()) == sorted([f"{R}+{S}", f"{C}+{S}"])
    assert main(["build", "--schema", schema, "--combos", f"{S}+lakes"]) == 1


def test_query_modes_match(dataset, tmp_path, capsys):
    q = tmp_path / "q.txt"
    q.write_text(
        f"SELECT layer.{S}, measure.CityCount; FROM Piet-Schema; "
        f"WHERE contains(layer.{S}, layer.{C}, subplevel.point);"
    )
    outs = {}
    for mode in ("piet", "rtree", "naive"):
        o = tmp_path / f"{mode}.csv"
        assert main(["query", "--file", str(q), "--schema", str(dataset / "schema.xml"), "--mode", mode, "--out", str(o)]) == 0
        outs[mode] = o.read_text()
        err = capsys.readouterr().err
        assert f"mode={mode}" in err
        if mode == "piet":
            assert "predicates=0" in err
    assert outs["piet"] == outs["rtree"] == outs["naive"]
    assert outs["piet"].splitlines()[0] == f"{S},CityCount"


def test_query_with_olap_and_region(dataset, tmp_path, capsys):
    q = tmp_path / "q.txt"
    q.write_text(
        f"SELECT layer.{S}; FROM Piet-Schema; WHERE intersection(layer.{S}, layer.{ST}, subplevel.point); | "
        "select {[Measures].[Unit Sales]} ON columns, {[Time].[1997]} ON rows from [Sales]"
    )
    assert main(["query", "--file", str(q), "--schema", str(dataset / "schema.xml")]) == 0
    cap = capsys.readouterr()
    assert cap.out.startswith("axis0,axis1,Unit Sales")
    assert "assembly_ms=" in cap.err
    region = tmp_path / "region.tsv"
    region.write_text("0\tPOLYGON((0 0, 500 0, 500 500, 0 500, 0 0))\n")
    q2 = tmp_path / "q2.txt"
    q2.write_text(f"SELECT layer.{R}, measure.RiverLength; FROM Piet-Schema; WHERE intersection(layer.{S}, layer.{R}, subplevel.linestring);")
    assert main(["query", "--file", str(q2), "--schema", str(dataset / "schema.xml"), "--region", str(region), "--exact"]) == 0
    assert capsys.readouterr().out.startswith(f"{R},RiverLength")


def test_pure_mdx_query(dataset, tmp_path, capsys):
    q = tmp_path / "schema_dir_query.txt"
    q.write_text("select {[Measures].[Store Sales]} ON columns, {[Product].[All Products].Children} ON rows from [Sales]")
    assert main(["query", "--file", str(q), "--schema", str(dataset / "schema.xml")]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1 + len(synth.PRODUCTS)


def test_inspect(dataset, capsys):
    assert main(["inspect", "--store", str(dataset)]) == 0
    assert len(capsys.readouterr().out.split()) == 11
    assert main(["inspect", "--store", str(dataset), "--combo", f"{S},{C}"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("# combination") and "grid 2x2" in out[0]
    assert out[1] == "subgeometry,max,min,avg" and len(out) == 6


def test_bench(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["bench", "--suite", "geometric", "--repeats", "1", "--states", "5", "--rivers", "3", "--points", "20",
                 "--grid", "2x2", "--out", str(out)])
    assert code == 0
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert {r["mode"] for r in rows} == {"piet", "rtree", "naive"}
    assert {r["query"] for r in rows} == {"Q1", "Q2", "Q3", "Q4"}
    assert all(r["predicates"] == "0" for r in rows if r["mode"] == "piet")


def test_bench_on_dataset(tmp_path, capsys):
    d = tmp_path / "d"
    assert main(["gen", "--seed", "2", "--states", "4", "--rivers", "2", "--points", "10", "--out", str(d)]) == 0
    assert main(["build", "--schema", str(d / "schema.xml"), "--combos", ";".join(["+".join([S, R, C, V])])]) == 0
    assert main(["bench", "--suite", "region", "--repeats", "1", "--schema", str(d / "schema.xml"),
                 "--modes", "piet,naive", "--out", str(tmp_path / "r.csv")]) == 0


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["gen"],
        ["build", "--schema", "x.xml", "--grid", "3by3"],
        ["bench", "--suite", "nope"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 1


def test_data_errors(tmp_path, dataset, capsys):
    assert main(["build", "--schema", str(tmp_path / "missing.xml")]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("SELECT ;")
    assert main(["query", "--file", str(bad), "--schema", str(dataset / "schema.xml")]) == 2
    assert "position" in capsys.readouterr().err
    assert main(["inspect", "--store", str(tmp_path), "--combo", "a+b"]) == 2
    broken = tmp_path / "broken"
    (broken / "layers").mkdir(parents=True)
    (broken / "schema.xml").write_text((dataset / "schema.xml").read_text())
    for f in (dataset / "layers").iterdir():
        (broken / "layers" / f.name).write_text(f.read_text())
    (broken / "layers" / f"{S}.tsv").write_text("0\tPOLYGON((0 0, 1 1, 1 0, 0 1, 0 0))\n")
    assert main(["build", "--schema", str(broken / "schema.xml"), "--layers", S]) == 2


def test_cap_exit(dataset, capsys):
    code = main(["build", "--schema", str(dataset / "schema.xml"), "--layers", f"{S},{R}", "--max-lines", "3",
                 "--out", str(dataset / "capped")])
    assert code == 3
    assert "error" in capsys.readouterr().err
