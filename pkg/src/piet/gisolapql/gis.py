"""The GIS section of a query: ``SELECT refs; FROM schema; WHERE ops;``."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union as TUnion

from ..errors import QuerySyntaxError
from .mdx import MdxQuery, parse_mdx, print_mdx

OPERATIONS = ("intersection", "contains")
SUBLEVELS = {"point": "Point", "linestring": "LineString", "polygon": "Polygon"}


@dataclass(frozen=True)
class LayerRef:
    layer: str


@dataclass(frozen=True)
class MeasureRef:
    measure: str


@dataclass(frozen=True)
class MemberRef:
    """A single geometry of a layer, written ``layer.gid``."""

    layer: str
    gid: int


Operand = TUnion[LayerRef, MemberRef]


@dataclass(frozen=True)
class Op:
    name: str
    left: Operand
    right: Operand
    sublevel: str


@dataclass(frozen=True)
class And:
    items: tuple["Cond", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["Cond", ...]


Cond = TUnion[Op, And, Or]


@dataclass(frozen=True)
class GisQuery:
    select: tuple[TUnion[LayerRef, MeasureRef], ...]
    schema: str
    where: Optional[Cond] = None


@dataclass(frozen=True)
class Query:
    gis: Optional[GisQuery]
    olap: Optional[MdxQuery]


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?![A-Za-z_]))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<punct>[.,;()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[Tok]:
    out = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[i]!r}", i, text)
        if m.lastgroup != "ws":
            out.append(Tok(m.lastgroup, m.group(), i))
        i = m.end()
    out.append(Tok("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str, pos: int | None = None):
        raise QuerySyntaxError(msg, self.tok.pos if pos is None else pos, self.text)

    def next(self) -> Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def is_kw(self, w: str) -> bool:
        return self.tok.kind == "ident" and self.tok.text.lower() == w

    def kw(self, w: str) -> None:
        if not self.is_kw(w):
            self.error(f"expected {w.upper()}, got {self.tok.text or 'end of input'!r}")
        self.next()

    def punct(self, ch: str) -> None:
        if not (self.tok.kind == "punct" and self.tok.text == ch):
            self.error(f"expected {ch!r}, got {self.tok.text or 'end of input'!r}")
        self.next()

    def at(self, ch: str) -> bool:
        return self.tok.kind == "punct" and self.tok.text == ch

    def ident(self, what: str) -> str:
        if self.tok.kind != "ident":
            self.error(f"expected {what}, got {self.tok.text or 'end of input'!r}")
        return self.next().text

    def query(self) -> GisQuery:
        self.kw("select")
        items = [self.select_item()]
        while self.at(","):
            self.next()
            items.append(self.select_item())
        self.punct(";")
        self.kw("from")
        schema = self.ident("schema name")
        self.punct(";")
        where = None
        if self.is_kw("where"):
            self.next()
            where = self.disjunction()
            self.punct(";")
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}")
        return GisQuery(tuple(items), schema, where)

    def select_item(self):
        pos = self.tok.pos
        head = self.ident("layer.<name> or measure.<name>").lower()
        self.punct(".")
        name = self.ident("a name")
        if head == "layer":
            return LayerRef(name)
        if head == "measure":
            return MeasureRef(name)
        self.error(f"SELECT items are layer.<name> or measure.<name>, not {head}.", pos)

    def operand(self) -> Operand:
        head = self.ident("an operand")
        self.punct(".")
        if head.lower() == "layer":
            return LayerRef(self.ident("a layer name"))
        if self.tok.kind != "num":
            self.error("expected layer.<name> or <layer>.<id>")
        return MemberRef(head, int(self.next().text))

    def disjunction(self) -> Cond:
        items = [self.conjunction()]
        while self.is_kw("or"):
            self.next()
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conjunction(self) -> Cond:
        items = [self.atom()]
        while self.is_kw("and"):
            self.next()
            items.append(self.atom())
        return items[0] if len(items) == 1 else And(tuple(items))

    def atom(self) -> Cond:
        if self.at("("):
            self.next()
            c = self.disjunction()
            self.punct(")")
            return c
        pos = self.tok.pos
        name = self.ident("an operation").lower()
        if name not in OPERATIONS:
            self.error(f"unknown operation {name!r}; expected one of {', '.join(OPERATIONS)}", pos)
        self.punct("(")
        a = self.operand()
        self.punct(",")
        b = self.operand()
        self.punct(",")
        pos = self.tok.pos
        head = self.ident("subplevel.<kind>")
        if head.lower() != "subplevel":
            self.error("third argument must be subplevel.<Point|LineString|Polygon>", pos)
        self.punct(".")
        pos = self.tok.pos
        kind = self.ident("Point, LineString or Polygon")
        if kind.lower() not in SUBLEVELS:
            self.error(f"bad sub-level {kind!r}; accepted values are Point, LineString, Polygon", pos)
        self.punct(")")
        return Op(name, a, b, SUBLEVELS[kind.lower()])


def parse_gis(text: str) -> GisQuery:
    return _Parser(text).query()


def _split_pipe(text: str) -> int:
    depth = 0
    for i, ch in enumerate(text):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth = max(0, depth - 1)
        elif ch == "|" and depth == 0:
            return i
    return -1


_MDX_START = re.compile(r"\s*select\s*(\{|\[|(crossjoin|union|hierarchize)\s*\()", re.IGNORECASE)


def parse(text: str) -> Query:
    """Parse ``GIS-part | OLAP-part``; either part may stand alone."""
    k = _split_pipe(text)
    if k < 0:
        if _MDX_START.match(text):
            return Query(None, parse_mdx(text))
        return Query(parse_gis(text), None)
    gis_text, olap_text = text[:k], text[k + 1:]
    try:
        gis = parse_gis(gis_text)
    except QuerySyntaxError as e:
        raise QuerySyntaxError(str(e).split(" (at position")[0], e.pos, text) from None
    return Query(gis, parse_mdx(olap_text, offset=k + 1))


# ---------------------------------------------------------------------------
# Printer


def _operand(o: Operand) -> str:
    return f"layer.{o.layer}" if isinstance(o, LayerRef) else f"{o.layer}.{o.gid}"


def print_cond(c: Cond, parent: str = "") -> str:
    if isinstance(c, Op):
        return f"{c.name}({_operand(c.left)}, {_operand(c.right)}, subplevel.{c.sublevel})"
    if isinstance(c, And):
        return " and ".join(print_cond(i, "and") for i in c.items)
    s = " or ".join(print_cond(i, "or") for i in c.items)
    return f"({s})" if parent == "and" else s


def print_gis(q: GisQuery) -> str:
    sel = ", ".join(f"layer.{s.layer}" if isinstance(s, LayerRef) else f"measure.{s.measure}" for s in q.select)
    out = f"SELECT {sel}; FROM {q.schema};"
    if q.where is not None:
        out += f" WHERE {print_cond(q.where)};"
    return out


def print_query(q: Query) -> str:
    parts = []
    if q.gis is not None:
        parts.append(print_gis(q.gis))
    if q.olap is not None:
        parts.append(print_mdx(q.olap))
    return " | ".join(parts)


def op_layers(c: Cond | None) -> list[str]:
    """Layers mentioned in a condition, in first-seen order."""
    out: list[str] = []

    def walk(x):
        if x is None:
            return
        if isinstance(x, Op):
            for o in (x.left, x.right):
                if o.layer not in out:
                    out.append(o.layer)
        else:
            for i in x.items:
                walk(i)

    walk(c)
    return out
