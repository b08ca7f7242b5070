"""Thematic layers: named geometry collections with per-geometry attributes."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import InvalidGeometryError, LayerParseError, UnknownGeometryError
from .geom import BBox, Geometry, PointGeom, Polygon, Polyline, Point2


@dataclass
class Layer:
    name: str
    geometries: dict[int, Geometry] = field(default_factory=dict)
    attributes: dict[int, dict[str, object]] = field(default_factory=dict)

    def add(self, g: Geometry, attrs: Mapping[str, object] | None = None) -> None:
        if g.gid in self.geometries:
            raise InvalidGeometryError(f"duplicate gid {g.gid} in layer {self.name}")
        self.geometries[g.gid] = g
        self.attributes[g.gid] = dict(attrs or {})

    def __len__(self) -> int:
        return len(self.geometries)

    def __iter__(self) -> Iterator[Geometry]:
        return iter(self.geometries.values())

    def __getitem__(self, gid: int) -> Geometry:
        try:
            return self.geometries[gid]
        except KeyError:
            raise UnknownGeometryError(f"layer {self.name} has no geometry {gid}") from None

    def __contains__(self, gid: object) -> bool:
        return gid in self.geometries

    @property
    def kinds(self) -> set[str]:
        return {g.kind for g in self.geometries.values()}

    def points(self) -> list[PointGeom]:
        return [g for g in self if isinstance(g, PointGeom)]

    def polylines(self) -> list[Polyline]:
        return [g for g in self if isinstance(g, Polyline)]

    def polygons(self) -> list[Polygon]:
        return [g for g in self if isinstance(g, Polygon)]

    def attr(self, gid: int, key: str, default=None):
        return self.attributes.get(gid, {}).get(key, default)

    def bbox(self) -> tuple[float, float, float, float] | None:
        boxes = [g.bbox() for g in self]
        if not boxes:
            return None
        return (
            min(b[0] for b in boxes),
            min(b[1] for b in boxes),
            max(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )

    def transformed(self, fn) -> "Layer":
        """Copy with every coordinate mapped through ``fn(x, y) -> (x, y)``."""
        out = Layer(self.name)
        for gid, g in self.geometries.items():
            if isinstance(g, PointGeom):
                ng = PointGeom(gid, Point2(*fn(*g.p)))
            elif isinstance(g, Polyline):
                ng = Polyline(gid, tuple(Point2(*fn(*v)) for v in g.vertices))
            else:
                ng = Polygon(gid, tuple(Point2(*fn(*v)) for v in g.vertices))
            out.add(ng, self.attributes.get(gid))
        return out


def map_bbox(layers: Iterable[Layer], margin: float = 0.05) -> BBox:
    """Box enclosing every geometry, padded by ``margin`` of its extent."""
    boxes = [b for b in (l.bbox() for l in layers) if b is not None]
    if not boxes:
        return BBox(0.0, 0.0, 1.0, 1.0)
    pts = [(b[0], b[1]) for b in boxes] + [(b[2], b[3]) for b in boxes]
    return BBox.of_points(pts, margin=margin)


# ---------------------------------------------------------------------------
# WKT-ish text format


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_WKT = re.compile(r"^\s*(POINT|LINESTRING|POLYGON)\s*\((.*)\)\s*$", re.IGNORECASE | re.DOTALL)


def _parse_coords(body: str) -> list[Point2]:
    pts = []
    for chunk in body.split(","):
        parts = chunk.split()
        if len(parts) != 2:
            raise ValueError(f"bad coordinate pair {chunk.strip()!r}")
        for p in parts:
            if not re.fullmatch(_NUM, p):
                raise ValueError(f"bad number {p!r}")
        x, y = float(parts[0]), float(parts[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("non-finite coordinate")
        pts.append(Point2(x, y))
    return pts


def parse_wkt(text: str, gid: int) -> Geometry:
    m = _WKT.match(text)
    if not m:
        raise ValueError(f"unrecognized geometry {text[:40]!r}")
    kind, body = m.group(1).upper(), m.group(2).strip()
    if kind == "POINT":
        pts = _parse_coords(body)
        if len(pts) != 1:
            raise ValueError("POINT takes one coordinate pair")
        return PointGeom(gid, pts[0])
    if kind == "LINESTRING":
        return Polyline(gid, tuple(_parse_coords(body)))
    # POLYGON((...)) or POLYGON (...)
    if body.startswith("("):
        if not body.endswith(")"):
            raise ValueError("unbalanced parentheses")
        body = body[1:-1]
        if "(" in body or ")" in body:
            raise ValueError("polygons with holes are not supported")
    pts = _parse_coords(body)
    if len(pts) < 4 or pts[0] != pts[-1]:
        raise ValueError("polygon ring must be closed and have at least 4 coordinates")
    return Polygon(gid, tuple(pts[:-1]))


def to_wkt(g: Geometry) -> str:
    def fmt(p):
        return f"{p.x!r} {p.y!r}"

    if isinstance(g, PointGeom):
        return f"POINT({fmt(g.p)})"
    if isinstance(g, Polyline):
        return "LINESTRING(" + ",".join(fmt(p) for p in g.vertices) + ")"
    return "POLYGON((" + ",".join(fmt(p) for p in g.ring) + "))"


def _coerce(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        f = float(v)
        if math.isfinite(f):
            return f
    except ValueError:
        pass
    return v


def parse_layer_text(text: str, name: str, path: str | None = None) -> Layer:
    layer = Layer(name)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 2:
            raise LayerParseError("expected gid<TAB>geometry", lineno, path)
        try:
            gid = int(cols[0].strip())
        except ValueError:
            raise LayerParseError(f"bad gid {cols[0]!r}", lineno, path) from None
        try:
            g = parse_wkt(cols[1], gid)
        except (ValueError, InvalidGeometryError) as e:
            raise LayerParseError(str(e), lineno, path) from None
        attrs = {}
        for kv in cols[2:]:
            kv = kv.strip()
            if not kv:
                continue
            if "=" not in kv:
                raise LayerParseError(f"attribute {kv!r} is not key=value", lineno, path)
            k, v = kv.split("=", 1)
            attrs[k.strip()] = _coerce(v.strip())
        try:
            layer.add(g, attrs)
        except InvalidGeometryError as e:
            raise LayerParseError(str(e), lineno, path) from None
    return layer


def ingest_layer(path: str | Path, name: str | None = None) -> Layer:
    """Read a layer TSV file: ``gid<TAB>WKT[<TAB>key=value ...]`` per line."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_layer_text(text, name or path.stem, str(path))


def layer_to_text(layer: Layer) -> str:
    lines = []
    for gid in sorted(layer.geometries):
        g = layer.geometries[gid]
        cols = [str(gid), to_wkt(g)]
        for k, v in layer.attributes.get(gid, {}).items():
            cols.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
        lines.append("\t".join(cols))
    return "\n".join(lines) + ("\n" if lines else "")


def write_layer(layer: Layer, path: str | Path) -> None:
    Path(path).write_text(layer_to_text(layer), encoding="utf-8")
