"""A small MDX dialect: parse, print and evaluate against a :class:`StarSchema`.

Supported: ``select <set> ON columns, <set> ON rows from [Cube] [where <slicer>]``
with braces, tuples, ``.Children``, ``Crossjoin``, ``Union`` and
``Hierarchize``. Anything else is a syntax error.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from typing import Sequence, Union as TUnion

import numpy as np

from ..dims import Cube, StarSchema
from ..errors import QuerySyntaxError, SchemaError, UnmappedMemberError

# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Member:
    path: tuple[str, ...]  # dimension name first

    @property
    def dim(self) -> str:
        return self.path[0]


@dataclass(frozen=True)
class Children:
    member: Member


@dataclass(frozen=True)
class TupleExpr:
    members: tuple[Member, ...]


@dataclass(frozen=True)
class SetExpr:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Crossjoin:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Union:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Hierarchize:
    arg: "Expr"


Expr = TUnion[Member, Children, TupleExpr, SetExpr, Crossjoin, Union, Hierarchize]


@dataclass(frozen=True)
class MdxQuery:
    columns: Expr
    rows: Expr
    cube: str
    slicer: Member | TupleExpr | None = None


# ---------------------------------------------------------------------------
# Lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<name>\[(?:[^\]]|\]\])*\])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}(),.;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    pos: int


def tokenize(text: str, offset: int = 0) -> list[Tok]:
    out = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[i]!r}", offset + i, text)
        kind = m.lastgroup
        if kind != "ws":
            t = m.group()
            if kind == "name":
                t = t[1:-1].replace("]]", "]")
            out.append(Tok(kind, t, offset + i))
        i = m.end()
    out.append(Tok("eof", "", offset + len(text)))
    return out


class _Parser:
    def __init__(self, text: str, offset: int = 0):
        self.text = text
        self.toks = tokenize(text, offset)
        self.i = 0

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str):
        raise QuerySyntaxError(msg, self.tok.pos, self.text)

    def next(self) -> Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def is_kw(self, word: str) -> bool:
        return self.tok.kind == "ident" and self.tok.text.lower() == word

    def kw(self, word: str) -> None:
        if not self.is_kw(word):
            self.error(f"expected {word!r}, got {self.tok.text or 'end of input'!r}")
        self.next()

    def punct(self, ch: str) -> None:
        if self.tok.kind != "punct" or self.tok.text != ch:
            self.error(f"expected {ch!r}, got {self.tok.text or 'end of input'!r}")
        self.next()

    def at_punct(self, ch: str) -> bool:
        return self.tok.kind == "punct" and self.tok.text == ch

    # grammar

    def query(self) -> MdxQuery:
        self.kw("select")
        axes = {}
        while True:
            e = self.set_expr()
            self.kw("on")
            if not (self.is_kw("columns") or self.is_kw("rows")):
                self.error("expected columns or rows")
            axis = self.next().text.lower()
            if axis in axes:
                self.error(f"axis {axis} given twice")
            axes[axis] = e
            if self.at_punct(","):
                self.next()
                continue
            break
        if "columns" not in axes or "rows" not in axes:
            self.error("both columns and rows axes are required")
        self.kw("from")
        if self.tok.kind != "name":
            self.error("expected [Cube] name")
        cube = self.next().text
        slicer = None
        if self.is_kw("where"):
            self.next()
            if self.at_punct("("):
                slicer = self.tuple_expr()
            else:
                slicer = self.member()
        if self.at_punct(";"):
            self.next()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r} after query")
        return MdxQuery(axes["columns"], axes["rows"], cube, slicer)

    def member(self) -> Member:
        if self.tok.kind != "name":
            self.error("expected a [member] path")
        parts = [self.next().text]
        while self.at_punct(".") and self.toks[self.i + 1].kind == "name":
            self.next()
            parts.append(self.next().text)
        return Member(tuple(parts))

    def member_or_children(self) -> Member | Children:
        m = self.member()
        if self.at_punct(".") and self.toks[self.i + 1].kind == "ident":
            if self.toks[self.i + 1].text.lower() != "children":
                self.next()
                self.error(f"unsupported member function {self.tok.text!r}")
            self.next()
            self.next()
            return Children(m)
        return m

    def tuple_expr(self) -> TupleExpr:
        self.punct("(")
        ms = [self.member()]
        while self.at_punct(","):
            self.next()
            ms.append(self.member())
        self.punct(")")
        return TupleExpr(tuple(ms))

    def set_expr(self) -> Expr:
        t = self.tok
        if self.at_punct("{"):
            self.next()
            items = []
            if not self.at_punct("}"):
                items.append(self.set_item())
                while self.at_punct(","):
                    self.next()
                    items.append(self.set_item())
            self.punct("}")
            return SetExpr(tuple(items))
        if t.kind == "ident":
            fn = t.text.lower()
            if fn in ("crossjoin", "union"):
                self.next()
                self.punct("(")
                a = self.set_expr()
                self.punct(",")
                b = self.set_expr()
                self.punct(")")
                return Crossjoin(a, b) if fn == "crossjoin" else Union(a, b)
            if fn == "hierarchize":
                self.next()
                self.punct("(")
                a = self.set_expr()
                self.punct(")")
                return Hierarchize(a)
            self.error(f"unsupported function {t.text!r}")
        if t.kind == "name":
            return self.member_or_children()
        self.error(f"expected a set, got {t.text or 'end of input'!r}")

    def set_item(self) -> Expr:
        if self.at_punct("("):
            return self.tuple_expr()
        return self.set_expr()


def parse_mdx(text: str, offset: int = 0) -> MdxQuery:
    return _Parser(text, offset).query()


# ---------------------------------------------------------------------------
# Printer


def _q(name: str) -> str:
    return "[" + name.replace("]", "]]") + "]"


def member_str(m: Member | Sequence[str]) -> str:
    path = m.path if isinstance(m, Member) else tuple(m)
    return ".".join(_q(p) for p in path)


def print_expr(e: Expr) -> str:
    if isinstance(e, Member):
        return member_str(e)
    if isinstance(e, Children):
        return member_str(e.member) + ".Children"
    if isinstance(e, TupleExpr):
        return "(" + ", ".join(member_str(m) for m in e.members) + ")"
    if isinstance(e, SetExpr):
        return "{" + ", ".join(print_expr(i) for i in e.items) + "}"
    if isinstance(e, Crossjoin):
        return f"Crossjoin({print_expr(e.left)}, {print_expr(e.right)})"
    if isinstance(e, Union):
        return f"Union({print_expr(e.left)}, {print_expr(e.right)})"
    if isinstance(e, Hierarchize):
        return f"Hierarchize({print_expr(e.arg)})"
    raise TypeError(e)


def print_mdx(q: MdxQuery) -> str:
    s = f"select {print_expr(q.columns)} ON columns, {print_expr(q.rows)} ON rows from {_q(q.cube)}"
    if q.slicer is not None:
        s += " where " + print_expr(q.slicer)
    return s


# ---------------------------------------------------------------------------
# Evaluation

MemberKey = tuple[str, ...]  # dimension name + path inside the dimension


def resolve(cube: Cube, m: Member) -> MemberKey:
    """Dimension-qualified member path, the all-member prefixed when omitted."""
    if m.dim == "Measures":
        if len(m.path) != 2 or m.path[1] not in cube.measures:
            raise SchemaError(f"unknown measure {member_str(m)}")
        return m.path
    dim = cube.dimensions.get(m.dim)
    if dim is None:
        raise SchemaError(f"cube {cube.name} has no dimension {m.dim!r}")
    rest = tuple(m.path[1:])
    if rest in dim:
        return (m.dim,) + rest
    if dim.all_name and dim.root + rest in dim:
        return (m.dim,) + dim.root + rest
    raise UnmappedMemberError(f"unknown member {member_str(m)}")


def eval_set(e: Expr, cube: Cube) -> list[tuple[MemberKey, ...]]:
    if isinstance(e, Member):
        return [(resolve(cube, e),)]
    if isinstance(e, Children):
        k = resolve(cube, e.member)
        if k[0] == "Measures":
            raise SchemaError("Children of a measure")
        dim = cube.dimensions[k[0]]
        return [((k[0],) + c,) for c in dim.children.get(k[1:], [])]
    if isinstance(e, TupleExpr):
        keys = tuple(resolve(cube, m) for m in e.members)
        if len({k[0] for k in keys}) != len(keys):
            raise SchemaError("a tuple may name each dimension once")
        return [keys]
    if isinstance(e, SetExpr):
        out = []
        for it in e.items:
            out.extend(eval_set(it, cube))
        return out
    if isinstance(e, Crossjoin):
        return [a + b for a in eval_set(e.left, cube) for b in eval_set(e.right, cube)]
    if isinstance(e, Union):
        left = eval_set(e.left, cube)
        seen = set(left)
        return left + [t for t in eval_set(e.right, cube) if not (t in seen or seen.add(t))]
    if isinstance(e, Hierarchize):
        return hierarchize(eval_set(e.arg, cube), cube)
    raise TypeError(e)


def hierarchize(tuples: list[tuple[MemberKey, ...]], cube: Cube) -> list[tuple[MemberKey, ...]]:
    """Stable sort into depth-first hierarchy order, tuple position by position."""

    def key(t):
        out = []
        for k in t:
            if k[0] == "Measures":
                out.append(cube.measures.index(k[1]))
            else:
                out.append(cube.dimensions[k[0]].order.get(k[1:], 0))
        return tuple(out)

    return sorted(tuples, key=key)


@dataclass
class PivotResult:
    rows: list[tuple[MemberKey, ...]]
    columns: list[MemberKey]
    body: np.ndarray
    cube: str = ""
    slicer: tuple[MemberKey, ...] = ()
    notices: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.body.shape != (len(self.rows), len(self.columns)):
            raise ValueError(f"body shape {self.body.shape} does not match headers")

    def row_labels(self) -> list[str]:
        return [", ".join(member_str(k) for k in t) for t in self.rows]

    def column_labels(self) -> list[str]:
        return [k[-1] for k in self.columns]

    def value(self, row: int, col: str) -> float:
        return float(self.body[row, self.column_labels().index(col)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = max((len(t) for t in self.rows), default=1)
        w.writerow([f"axis{i}" for i in range(n)] + self.column_labels())
        for t, vals in zip(self.rows, self.body):
            w.writerow([member_str(k) for k in t] + [repr(float(v)) for v in vals])
        return buf.getvalue()

    def render(self) -> str:
        labels = [" / ".join(k[-1] for k in t) for t in self.rows]
        cols = self.column_labels()
        w0 = max([len(x) for x in labels] + [4])
        ws = [max(len(c), 12) for c in cols]
        lines = [" " * w0 + "  " + "  ".join(c.rjust(w) for c, w in zip(cols, ws))]
        for lab, vals in zip(labels, self.body):
            lines.append(lab.ljust(w0) + "  " + "  ".join(f"{v:{w}.2f}" for v, w in zip(vals, ws)))
        return "\n".join(lines)


def _evaluate(cube: Cube, rows, cols, slicer) -> np.ndarray:
    body = np.zeros((len(rows), len(cols)))
    base = {}
    for k in slicer:
        base[k[0]] = k[1:]
    for i, t in enumerate(rows):
        members = dict(base)
        for k in t:
            if k[0] == "Measures":
                raise SchemaError("measures belong on the columns axis")
            members[k[0]] = k[1:]
        for j, c in enumerate(cols):
            body[i, j] = cube.value(members, c[1])
    return body


def eval_mdx(q: MdxQuery, star: StarSchema) -> PivotResult:
    cube = star.cube(q.cube)
    cols = eval_set(q.columns, cube)
    for t in cols:
        if len(t) != 1 or t[0][0] != "Measures":
            raise SchemaError("only measures may appear on columns")
    cols = [t[0] for t in cols]
    rows = eval_set(q.rows, cube)
    slicer: tuple[MemberKey, ...] = ()
    if q.slicer is not None:
        slicer = tuple(k for t in eval_set(q.slicer, cube) for k in t)
    return PivotResult(rows, cols, _evaluate(cube, rows, cols, slicer), cube.name, slicer)


def _reeval(res: PivotResult, star: StarSchema, rows) -> PivotResult:
    cube = star.cube(res.cube)
    return PivotResult(rows, res.columns, _evaluate(cube, rows, res.columns, res.slicer), res.cube, res.slicer)


def drill(res: PivotResult, star: StarSchema, member: Member | MemberKey) -> PivotResult:
    """Replace every row holding ``member`` by one row per child."""
    cube = star.cube(res.cube)
    key = resolve(cube, member) if isinstance(member, Member) else tuple(member)
    dim = cube.dimensions.get(key[0])
    if dim is None or not any(key in t for t in res.rows):
        raise UnmappedMemberError(f"{member_str(key)} is not on the rows axis")
    kids = dim.children.get(key[1:], [])
    if not kids:
        out = _reeval(res, star, list(res.rows))
        out.notices = res.notices + [f"{member_str(key)} is a leaf; nothing to drill"]
        return out
    rows = []
    for t in res.rows:
        if key in t:
            i = t.index(key)
            rows.extend(t[:i] + ((key[0],) + c,) + t[i + 1:] for c in kids)
        else:
            rows.append(t)
    return _reeval(res, star, rows)


def rollup(res: PivotResult, star: StarSchema, member: Member | MemberKey) -> PivotResult:
    """Collapse ``member`` and its siblings into their parent (inverse of drill)."""
    cube = star.cube(res.cube)
    key = resolve(cube, member) if isinstance(member, Member) else tuple(member)
    dim = cube.dimensions[key[0]]
    parent = dim.parent(key[1:])
    if parent is None:
        out = _reeval(res, star, list(res.rows))
        out.notices = res.notices + [f"{member_str(key)} has no parent"]
        return out
    pkey = (key[0],) + parent
    rows: list = []
    seen = set()
    for t in res.rows:
        hit = [i for i, k in enumerate(t) if k[0] == key[0] and k[1:-1] == parent and len(k) == len(key)]
        if hit:
            i = hit[0]
            t = t[:i] + (pkey,) + t[i + 1:]
            if t in seen:
                continue
            seen.add(t)
        rows.append(t)
    return _reeval(res, star, rows)
