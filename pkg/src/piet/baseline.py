"""R-tree and aggregation R-tree used as comparators and index-level oracles.

Trees are bulk loaded with sort-tile-recursive packing; single inserts use
the quadratic split. Every node carries count/sum/max of the values of the
entries below it, which is what lets :func:`ar_aggregate` stop descending
at nodes whose rectangle lies inside the query region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .errors import UnsupportedAggregateError
from .geom import Geometry, Location, PointGeom, Polygon, intersection_area, point_in_ring

AR_AGGREGATES = ("count", "sum", "max")


@dataclass(frozen=True)
class Mbr:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin <= self.xmax and self.ymin <= self.ymax):
            raise ValueError(f"inverted rectangle {self}")

    @classmethod
    def of(cls, g: Geometry | Sequence[float]) -> "Mbr":
        if hasattr(g, "bbox"):
            return cls(*g.bbox())
        if len(g) == 2:
            return cls(g[0], g[1], g[0], g[1])
        return cls(*g)

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def union(self, o: "Mbr") -> "Mbr":
        return Mbr(min(self.xmin, o.xmin), min(self.ymin, o.ymin), max(self.xmax, o.xmax), max(self.ymax, o.ymax))

    def intersects(self, o: "Mbr") -> bool:
        return not (o.xmin > self.xmax or o.xmax < self.xmin or o.ymin > self.ymax or o.ymax < self.ymin)

    def within(self, o: "Mbr") -> bool:
        return o.xmin <= self.xmin and self.xmax <= o.xmax and o.ymin <= self.ymin and self.ymax <= o.ymax

    def enlargement(self, o: "Mbr") -> float:
        return self.union(o).area - self.area

    @property
    def center(self) -> tuple[float, float]:
        return ((self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2)


def _cover(boxes: Iterable[Mbr]) -> Mbr:
    it = iter(boxes)
    m = next(it)
    for b in it:
        m = m.union(b)
    return m


@dataclass
class Entry:
    id: int
    mbr: Mbr
    obj: object = None
    value: float = 0.0


@dataclass(eq=False)
class ArNode:
    mbr: Mbr
    leaf: bool
    children: list = field(default_factory=list)  # ArNode or Entry
    count: int = 0
    sum: float = 0.0
    max: float = -math.inf
    nid: int = -1

    def refresh(self) -> None:
        self.mbr = _cover(c.mbr for c in self.children)
        if self.leaf:
            self.count = len(self.children)
            self.sum = math.fsum(e.value for e in self.children)
            self.max = max((e.value for e in self.children), default=-math.inf)
        else:
            self.count = sum(c.count for c in self.children)
            self.sum = math.fsum(c.sum for c in self.children)
            self.max = max((c.max for c in self.children), default=-math.inf)

    def aggregate(self, kind: str) -> float:
        return {"count": self.count, "sum": self.sum, "max": self.max}[kind]


@dataclass
class RTree:
    root: Optional[ArNode]
    fanout: int

    @property
    def height(self) -> int:
        h = 0
        n = self.root
        if n is None:
            return -1
        while not n.leaf:
            n = n.children[0]
            h += 1
        return h

    def __len__(self) -> int:
        return self.root.count if self.root else 0

    def nodes(self) -> list[ArNode]:
        out = []
        stack = [self.root] if self.root else []
        while stack:
            n = stack.pop()
            out.append(n)
            if not n.leaf:
                stack.extend(reversed(n.children))
        return out

    def leaves(self) -> list[ArNode]:
        return [n for n in self.nodes() if n.leaf]

    def level_sizes(self) -> list[int]:
        """Number of nodes per level, root first."""
        out = []
        level = [self.root] if self.root else []
        while level:
            out.append(len(level))
            if level[0].leaf:
                break
            level = [c for n in level for c in n.children]
        return out

    def renumber(self) -> None:
        for i, n in enumerate(self.nodes()):
            n.nid = i

    # -- insertion -------------------------------------------------------

    def insert(self, e: Entry) -> None:
        if self.root is None:
            self.root = ArNode(e.mbr, True, [e])
            self.root.refresh()
            self.renumber()
            return
        path = [self.root]
        n = self.root
        while not n.leaf:
            n = min(n.children, key=lambda c: (c.mbr.enlargement(e.mbr), c.mbr.area))
            path.append(n)
        n.children.append(e)
        split = None
        for node in reversed(path):
            if split is not None:
                node.children.append(split)
                split = None
            if len(node.children) > self.fanout:
                split = _quadratic_split(node, self.fanout)
            node.refresh()
        if split is not None:
            old = self.root
            self.root = ArNode(old.mbr.union(split.mbr), False, [old, split])
            self.root.refresh()
        self.renumber()


def _quadratic_split(node: ArNode, fanout: int) -> ArNode:
    """Split an overflowing node in place; returns the new sibling."""
    items = node.children
    m = max(2, fanout // 2)
    worst, seeds = -math.inf, (0, 1)
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            d = items[i].mbr.union(items[j].mbr).area - items[i].mbr.area - items[j].mbr.area
            if d > worst:
                worst, seeds = d, (i, j)
    g1, g2 = [items[seeds[0]]], [items[seeds[1]]]
    b1, b2 = g1[0].mbr, g2[0].mbr
    rest = [it for k, it in enumerate(items) if k not in seeds]
    while rest:
        if len(g1) + len(rest) == m:
            g1.extend(rest)
            break
        if len(g2) + len(rest) == m:
            g2.extend(rest)
            break
        best = max(rest, key=lambda it: abs(b1.enlargement(it.mbr) - b2.enlargement(it.mbr)))
        rest.remove(best)
        d1, d2 = b1.enlargement(best.mbr), b2.enlargement(best.mbr)
        if (d1, b1.area, len(g1)) <= (d2, b2.area, len(g2)):
            g1.append(best)
            b1 = b1.union(best.mbr)
        else:
            g2.append(best)
            b2 = b2.union(best.mbr)
    node.children = g1
    sib = ArNode(b2, node.leaf, g2)
    sib.refresh()
    return sib


def _even_chunks(seq: list, size: int) -> list[list]:
    """Split into ceil(n/size) chunks whose lengths differ by at most one."""
    n = len(seq)
    if n == 0:
        return []
    k = math.ceil(n / size)
    base, extra = divmod(n, k)
    out, i = [], 0
    for j in range(k):
        s = base + (1 if j < extra else 0)
        out.append(seq[i:i + s])
        i += s
    return out


def _str_pack(items: list, fanout: int) -> list[list]:
    n = len(items)
    pages = math.ceil(n / fanout)
    slabs = math.ceil(math.sqrt(pages))
    by_x = sorted(items, key=lambda it: (it.mbr.center[0], it.mbr.center[1]))
    groups = []
    for slab in _even_chunks(by_x, math.ceil(n / slabs)):
        slab.sort(key=lambda it: (it.mbr.center[1], it.mbr.center[0]))
        groups.extend(_even_chunks(slab, fanout))
    return groups


def build(entries: Iterable[Entry], fanout: int = 16) -> RTree:
    """Sort-tile-recursive bulk load."""
    if fanout < 4:
        raise ValueError("fanout must be at least 4")
    entries = sorted(entries, key=lambda e: e.id)
    if not entries:
        return RTree(None, fanout)
    level: list = entries
    leaf = True
    while True:
        nodes = []
        for grp in _str_pack(level, fanout) if len(level) > fanout else [level]:
            n = ArNode(grp[0].mbr, leaf, list(grp))
            n.refresh()
            nodes.append(n)
        if len(nodes) == 1:
            t = RTree(nodes[0], fanout)
            t.renumber()
            return t
        level = nodes
        leaf = False


def entries_of(geoms: Iterable[Geometry], values: Optional[dict[int, float]] = None) -> list[Entry]:
    values = values or {}
    return [Entry(g.gid, Mbr.of(g), g, float(values.get(g.gid, 0.0))) for g in geoms]


def build_from_geometries(geoms: Iterable[Geometry], fanout: int = 16, values=None) -> RTree:
    return build(entries_of(geoms, values), fanout)


def check_invariants(t: RTree) -> list[str]:
    """Balance, tight rectangles, minimum fill and aggregate consistency."""
    out = []
    if t.root is None:
        return out
    depths = set()

    def walk(n: ArNode, d: int, is_root: bool):
        if not is_root and len(n.children) < max(2, t.fanout // 2):
            out.append(f"node {n.nid} underfull ({len(n.children)})")
        if len(n.children) > t.fanout:
            out.append(f"node {n.nid} overfull ({len(n.children)})")
        if n.mbr != _cover(c.mbr for c in n.children):
            out.append(f"node {n.nid} rectangle is not tight")
        if n.leaf:
            depths.add(d)
            cnt, s, mx = len(n.children), math.fsum(e.value for e in n.children), max(e.value for e in n.children)
        else:
            for c in n.children:
                if not isinstance(c, ArNode):
                    out.append(f"inner node {n.nid} holds an entry")
                    continue
                walk(c, d + 1, False)
            cnt = sum(c.count for c in n.children)
            s = math.fsum(c.sum for c in n.children)
            mx = max(c.max for c in n.children)
        if (n.count, n.max) != (cnt, mx) or abs(n.sum - s) > 1e-9 * max(1.0, abs(s)):
            out.append(f"node {n.nid} aggregates are stale")

    walk(t.root, 0, True)
    if len(depths) > 1:
        out.append(f"leaves at depths {sorted(depths)}")
    return out


# ---------------------------------------------------------------------------
# Queries


@dataclass
class Stats:
    visits: int = 0
    predicates: int = 0
    trace: list[int] = field(default_factory=list)


def range_query(
    t: RTree, rect: Mbr | None, predicate: Callable[[Entry], bool] | None = None, stats: Stats | None = None
) -> list[int]:
    """Ids of entries whose rectangle meets ``rect`` and that pass ``predicate``."""
    stats = stats if stats is not None else Stats()
    if t.root is None or rect is None:
        return []
    out = []
    stack = [t.root]
    while stack:
        n = stack.pop()
        stats.visits += 1
        stats.trace.append(n.nid)
        for c in n.children:
            if not c.mbr.intersects(rect):
                continue
            if n.leaf:
                if predicate is not None:
                    stats.predicates += 1
                    if not predicate(c):
                        continue
                out.append(c.id)
            else:
                stack.append(c)
    return sorted(out)


def spatial_join(
    ta: RTree, tb: RTree, predicate: Callable[[object, object], bool], stats: Stats | None = None
) -> set[tuple[int, int]]:
    """Synchronized traversal: rectangle filter, then the exact predicate."""
    stats = stats if stats is not None else Stats()
    out: set[tuple[int, int]] = set()
    if ta.root is None or tb.root is None or not ta.root.mbr.intersects(tb.root.mbr):
        return out
    stack = [(ta.root, tb.root)]
    while stack:
        a, b = stack.pop()
        stats.visits += 1
        if a.leaf and b.leaf:
            for ea in a.children:
                for eb in b.children:
                    if ea.mbr.intersects(eb.mbr):
                        stats.predicates += 1
                        if predicate(ea.obj, eb.obj):
                            out.add((ea.id, eb.id))
            continue
        # descend the non-leaf side (the taller one first)
        if not a.leaf and (b.leaf or a.mbr.area >= b.mbr.area):
            for ca in a.children:
                if ca.mbr.intersects(b.mbr):
                    stack.append((ca, b))
        else:
            for cb in b.children:
                if cb.mbr.intersects(a.mbr):
                    stack.append((a, cb))
    return out


Region = Mbr | Polygon


def _rect_in_region(m: Mbr, region: Region) -> bool:
    if isinstance(region, Mbr):
        return m.within(region)
    x0, y0, x1, y1 = region.bbox()
    if not Mbr(x0, y0, x1, y1).intersects(m) or not m.within(Mbr(x0, y0, x1, y1)):
        return False
    corners = [(m.xmin, m.ymin), (m.xmax, m.ymin), (m.xmax, m.ymax), (m.xmin, m.ymax)]
    if not all(point_in_ring(c, region.vertices, 0.0) is not Location.OUTSIDE for c in corners):
        return False
    if m.area == 0.0:
        # degenerate box: a segment or a point, corners already decide for convex regions
        return region.is_convex
    return intersection_area(corners, region.vertices) >= m.area * (1 - 1e-12)


def _rect_meets_region(m: Mbr, region: Region) -> bool:
    if isinstance(region, Mbr):
        return m.intersects(region)
    if not m.intersects(Mbr(*region.bbox())):
        return False
    from .geom import BBox, geometry_meets_box

    if m.area == 0.0:
        return True  # cheap: keep degenerate boxes, the leaf test decides
    return geometry_meets_box(region, BBox(m.xmin, m.ymin, m.xmax, m.ymax))


def _entry_inside(e: Entry, region: Region) -> bool:
    if isinstance(e.obj, PointGeom) or e.obj is None and e.mbr.area == 0 and e.mbr.xmin == e.mbr.xmax:
        p = (e.mbr.xmin, e.mbr.ymin)
        if isinstance(region, Mbr):
            return region.xmin <= p[0] <= region.xmax and region.ymin <= p[1] <= region.ymax
        return point_in_ring(p, region.vertices, 0.0) is not Location.OUTSIDE
    if e.obj is None:
        return _rect_in_region(e.mbr, region)
    from .naive import contains

    reg = region if isinstance(region, Polygon) else Polygon(
        0, [(region.xmin, region.ymin), (region.xmax, region.ymin), (region.xmax, region.ymax), (region.xmin, region.ymax)]
    )
    return contains(reg, e.obj)


def ar_aggregate(t: RTree, region: Region, agg: str, stats: Stats | None = None) -> Optional[float]:
    """count/sum/max of the values of entries lying inside ``region``.

    A node whose rectangle lies inside the region answers from its stored
    aggregate and its subtree is not visited.
    """
    if agg not in AR_AGGREGATES:
        raise UnsupportedAggregateError(f"aR-tree aggregates are {AR_AGGREGATES}, not {agg!r}")
    stats = stats if stats is not None else Stats()
    if t.root is None:
        return 0 if agg != "max" else None
    count, total, best = 0, [], -math.inf
    stack = [t.root]
    while stack:
        n = stack.pop()
        stats.visits += 1
        stats.trace.append(n.nid)
        if _rect_in_region(n.mbr, region):
            count += n.count
            total.append(n.sum)
            best = max(best, n.max)
            continue
        for c in n.children:
            if not _rect_meets_region(c.mbr, region):
                continue
            if n.leaf:
                stats.predicates += 1
                if _entry_inside(c, region):
                    count += 1
                    total.append(c.value)
                    best = max(best, c.value)
            else:
                stack.append(c)
    if agg == "count":
        return count
    if agg == "sum":
        return math.fsum(total)
    return None if best == -math.inf else best


def subtree_ids(n: ArNode) -> set[int]:
    out = set()
    stack = [n]
    while stack:
        x = stack.pop()
        out.add(x.nid)
        if not x.leaf:
            stack.extend(x.children)
    return out


def pruning_violations(t: RTree, region: Region, trace: Sequence[int]) -> list[int]:
    """Visited node ids lying under a node whose rectangle is inside the region."""
    visited = set(trace)
    bad = []
    for n in t.nodes():
        if n.nid in visited and _rect_in_region(n.mbr, region) and not n.leaf:
            for c in n.children:
                bad.extend(sorted(subtree_ids(c) & visited))
    return bad
