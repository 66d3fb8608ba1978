"""Finite rooted trees with topological (parent-before-child) numbering.

Nodes are dense integers ``0..n-1`` with the root at ``0``.  Every builder in
this module numbers nodes level by level, so a level is a contiguous index
range and prefix accumulations along root paths are single forward passes.

Binary and biased trees additionally store, for each node, its rank counted
from the right inside its level (rank 0 is the rightmost node).  The parent of
rank ``r`` has rank ``r // 2``, which is all the planar structure the biased
construction needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

#: default cap on materialized node count (a full binary tree of depth 24)
MAX_NODES = 2**25 - 1
#: default depth limit for :func:`build_binary`
BINARY_DEPTH_LIMIT = 24
_LIFT_MIN = 32  # parent climbing is cheaper for short gaps


class TreeError(ValueError):
    """Raised for malformed trees or invalid structural queries."""


class ComparabilityError(TreeError):
    pass


@dataclass(frozen=True, eq=False)
class Tree:
    parent: np.ndarray  # int64, -1 for the root
    depth: np.ndarray  # int64
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    rank: Optional[np.ndarray] = None  # rank-from-right inside the level

    def __post_init__(self):
        n = len(self.parent)
        if n == 0:
            raise TreeError("a tree needs at least one node")
        order = np.argsort(self.depth, kind="stable")
        counts = np.bincount(self.depth, minlength=int(self.depth.max()) + 1)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        object.__setattr__(self, "_level_order", order)
        object.__setattr__(self, "_level_offsets", offsets)
        kids = self.parent[1:]
        corder = np.argsort(kids, kind="stable") + 1
        cptr = np.concatenate([[0], np.cumsum(np.bincount(kids, minlength=n))])
        object.__setattr__(self, "_child_idx", corder)
        object.__setattr__(self, "_child_ptr", cptr)

    # ------------------------------------------------------------------ sizes
    @property
    def node_count(self) -> int:
        return len(self.parent)

    @property
    def max_depth(self) -> int:
        return len(self._level_offsets) - 2

    @property
    def R(self) -> np.ndarray:
        """Generation sizes ``R(0), R(1), ...``."""
        return np.diff(self._level_offsets)

    def level(self, n: int) -> np.ndarray:
        """Node ids of depth ``n``."""
        if n < 0 or n > self.max_depth:
            return np.empty(0, dtype=np.int64)
        lo, hi = self._level_offsets[n], self._level_offsets[n + 1]
        return self._level_order[lo:hi]

    @property
    def levels(self) -> list:
        return [self.level(n) for n in range(self.max_depth + 1)]

    def children(self, t: int) -> np.ndarray:
        return self._child_idx[self._child_ptr[t]:self._child_ptr[t + 1]]

    @property
    def child_count(self) -> np.ndarray:
        return np.diff(self._child_ptr)

    # ---------------------------------------------------------- order queries
    def ancestors(self, t: int) -> Iterator[int]:
        """Iterate the root path ``[0, t]`` from the root down to ``t``."""
        path = []
        while t >= 0:
            path.append(int(t))
            t = int(self.parent[t])
        return reversed(path)

    def ancestor_at_depth(self, t, n):
        """Ancestor of ``t`` (scalar or array) at depth ``n`` (must be <= depth of t)."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.array(t, dtype=np.int64))
        n = np.broadcast_to(np.asarray(n, dtype=np.int64), t.shape)
        if np.any(n > self.depth[t]):
            raise TreeError("requested depth below the node")
        gap = self.depth[t] - n
        if gap.size and gap.max() > _LIFT_MIN:
            jumps = self._jumps()
            for k in range(len(jumps)):
                sel = (gap >> k) & 1 == 1
                if sel.any():
                    t[sel] = jumps[k][t[sel]]
            return int(t[0]) if scalar else t
        deeper = gap > 0
        while deeper.any():
            t[deeper] = self.parent[t[deeper]]
            deeper = self.depth[t] > n
        return int(t[0]) if scalar else t

    def _jumps(self) -> list:
        """Binary lifting table: ``jumps[k][t]`` is the ancestor ``2^k`` levels up (root clamps)."""
        cached = getattr(self, "_jump_table", None)
        if cached is not None:
            return cached
        up = np.where(self.parent < 0, 0, self.parent).astype(np.int32)
        table = [up]
        for _ in range(1, max(1, int(self.max_depth).bit_length())):
            table.append(table[-1][table[-1]])
        object.__setattr__(self, "_jump_table", table)
        return table

    def is_ancestor(self, t: int, s: int) -> bool:
        """True when ``t`` lies on the root path of ``s`` (``t`` precedes-or-equals ``s``)."""
        dt, ds = self.depth[t], self.depth[s]
        if dt > ds:
            return False
        return self.ancestor_at_depth(s, dt) == t

    def is_comparable(self, t: int, s: int) -> bool:
        return self.is_ancestor(t, s) or self.is_ancestor(s, t)

    def meet(self, t: int, s: int) -> int:
        """Deepest common ancestor ``t ^ s``."""
        return int(self.meet_many(np.array([t]), np.array([s]))[0])

    def meet_many(self, a, b) -> np.ndarray:
        """Vectorized meet over paired arrays of node ids."""
        a = np.array(a, dtype=np.int64, copy=True)
        b = np.array(b, dtype=np.int64, copy=True)
        da, db = self.depth[a], self.depth[b]
        common = np.minimum(da, db)
        a = np.atleast_1d(self.ancestor_at_depth(a, common))
        b = np.atleast_1d(self.ancestor_at_depth(b, common))
        diff = a != b
        while diff.any():
            a[diff] = self.parent[a[diff]]
            b[diff] = self.parent[b[diff]]
            diff = a != b
        return a

    def order_interval(self, t: int, s: int, half_open: bool = False) -> list:
        """``[t, s]`` (or ``(t, s]``) listed from ``t`` towards ``s``."""
        if not self.is_ancestor(t, s):
            raise ComparabilityError(f"node {t} does not precede node {s}")
        path = []
        x = s
        while x != t:
            path.append(int(x))
            x = int(self.parent[x])
        if not half_open:
            path.append(int(t))
        return path[::-1]

    # --------------------------------------------------------------- labels
    def label(self, t: int) -> str:
        """Binary-string label of a node of a binary or biased tree."""
        if self.rank is None:
            raise TreeError("labels exist only for binary and biased trees")
        n = int(self.depth[t])
        if n == 0:
            return ""
        value = (1 << n) - 1 - int(self.rank[t])
        return format(value, f"0{n}b")

    def node_of_label(self, label: str) -> int:
        if self.rank is None:
            raise TreeError("labels exist only for binary and biased trees")
        n = len(label)
        r = (1 << n) - 1 - (int(label, 2) if label else 0)
        ids = self.level(n)
        hit = ids[self.rank[ids] == r]
        if len(hit) == 0:
            raise TreeError(f"label {label!r} not present in this tree")
        return int(hit[0])

    def validate(self) -> None:
        p, d = self.parent, self.depth
        if p[0] != -1 or d[0] != 0:
            raise TreeError("node 0 must be the root at depth 0")
        if np.count_nonzero(p < 0) != 1:
            raise TreeError("exactly one node may lack a parent")
        kids = np.arange(1, len(p))
        if np.any(p[1:] >= kids):
            raise TreeError("nodes must be numbered parent-before-child")
        if np.any(d[1:] != d[p[1:]] + 1):
            raise TreeError("depth inconsistent with parent links")
        if self.R.sum() != self.node_count:
            raise TreeError("generation counts do not add up")


def _check_size(n_nodes: int, max_nodes: int) -> None:
    if n_nodes > max_nodes:
        raise TreeError(
            f"tree would have {n_nodes} nodes, above the materialization limit "
            f"of {max_nodes}; use level arithmetic instead"
        )


def _from_level_counts(counts: Sequence[int], parent_rank, kind, params,
                       keep_rank=True, max_nodes=MAX_NODES) -> Tree:
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    _check_size(total, max_nodes)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    parent = np.empty(total, dtype=np.int64)
    depth = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    rank = np.empty(total, dtype=np.int64)
    parent[0] = -1
    rank[0] = 0
    for n in range(1, len(counts)):
        r = np.arange(counts[n], dtype=np.int64)
        pr = parent_rank(n, r, counts[n - 1])
        lo = offsets[n]
        parent[lo:lo + counts[n]] = offsets[n - 1] + pr
        rank[lo:lo + counts[n]] = r
    return Tree(parent=parent, depth=depth, kind=kind, params=params,
                rank=rank if keep_rank else None)


def build_path(n_levels: int) -> Tree:
    """A chain ``0 -> 1 -> ... -> n_levels-1``."""
    if n_levels < 1:
        raise TreeError("n_levels must be >= 1")
    parent = np.arange(-1, n_levels - 1, dtype=np.int64)
    depth = np.arange(n_levels, dtype=np.int64)
    return Tree(parent=parent, depth=depth, kind="path",
                params={"n_levels": n_levels}, rank=np.zeros(n_levels, dtype=np.int64))


def build_binary(depth: int, limit: int = BINARY_DEPTH_LIMIT) -> Tree:
    """Full binary tree with ``R(n) = 2**n`` for ``0 <= n <= depth``."""
    if depth < 0:
        raise TreeError("depth must be non-negative")
    if depth > limit:
        raise TreeError(
            f"binary depth {depth} exceeds the materialization limit {limit}"
        )
    counts = [1 << n for n in range(depth + 1)]
    return _from_level_counts(counts, lambda n, r, prev: r // 2, "binary",
                              {"depth": depth}, max_nodes=2 ** (limit + 1))


def biased_level_sizes(lam: int, depth: int) -> np.ndarray:
    """``R(n) = 2**n`` for ``n <= 2*lam`` and ``n**lam`` beyond."""
    if lam < 1:
        raise TreeError("biased order must be a positive integer")
    sizes = [(1 << n) if n <= 2 * lam else n**lam for n in range(depth + 1)]
    return np.asarray(sizes, dtype=np.int64)


def build_biased(lam: int, depth: int, max_nodes: int = MAX_NODES) -> Tree:
    """Keep the ``R(n)`` rightmost nodes of every level of the binary tree.

    The level sizes must satisfy ``R(n+1) <= 2 R(n)`` for the kept set to be
    closed under parents; this fails for ``lam >= 3`` at ``n = 2*lam``.
    """
    if depth < 1:
        raise TreeError("depth must be >= 1")
    counts = biased_level_sizes(lam, depth)
    bad = np.nonzero(counts[1:] > 2 * counts[:-1])[0]
    if len(bad):
        n = int(bad[0])
        raise TreeError(
            f"biased order {lam} is not parent-closed: R({n + 1})={counts[n + 1]}"
            f" > 2*R({n})={2 * counts[n]}"
        )
    return _from_level_counts(counts, lambda n, r, prev: r // 2, "biased",
                              {"lambda": lam, "depth": depth}, max_nodes=max_nodes)


def build_moderate(lam: float, depth: int, max_nodes: int = MAX_NODES) -> Tree:
    """Tree with ``R(n) = ceil((n+1)**lam)`` where every non-leaf level branches.

    Parents are assigned proportionally (``floor(i * R(n-1) / R(n))``), so
    every node above the last level keeps at least one child.
    """
    if lam < 0:
        raise TreeError("growth exponent must be non-negative")
    counts = np.array([int(np.ceil((n + 1) ** lam - 1e-9)) for n in range(depth + 1)],
                      dtype=np.int64)
    return _from_level_counts(counts, lambda n, r, prev: (r * prev) // counts[n],
                              "moderate", {"lambda": lam, "depth": depth},
                              keep_rank=False, max_nodes=max_nodes)


def from_parents(parent: Sequence[int], kind: str = "custom") -> Tree:
    """Build from a parent list; ``parent[0]`` must be ``-1``."""
    parent = np.asarray(parent, dtype=np.int64)
    if len(parent) == 0 or parent[0] != -1:
        raise TreeError("node 0 must be the root (parent -1)")
    if np.any(parent[1:] < 0) or np.any(parent[1:] >= np.arange(1, len(parent))):
        raise TreeError("nodes must be numbered parent-before-child")
    depth = np.zeros(len(parent), dtype=np.int64)
    for t in range(1, len(parent)):
        depth[t] = depth[parent[t]] + 1
    tree = Tree(parent=parent, depth=depth, kind=kind)
    tree.validate()
    return tree


def load_edge_list(path) -> Tree:
    """Read ``child parent`` pairs, one per line; the root 0 is implicit."""
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise TreeError(f"line {lineno}: expected 'child parent'")
        child, par = int(fields[0]), int(fields[1])
        if child in pairs:
            raise TreeError(f"line {lineno}: node {child} listed twice")
        pairs[child] = par
    n = len(pairs) + 1
    if sorted(pairs) != list(range(1, n)):
        raise TreeError("child indices must be exactly 1..n-1")
    parent = [-1] + [pairs[c] for c in range(1, n)]
    return from_parents(parent)


def save_edge_list(tree: Tree, path) -> None:
    lines = [f"{t} {int(tree.parent[t])}" for t in range(1, tree.node_count)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def random_tree(n_nodes: int, rng: np.random.Generator, max_children: Optional[int] = None) -> Tree:
    """Random recursive tree: node ``t`` attaches to a uniform earlier node."""
    parent = [-1]
    kids = [0]
    for t in range(1, n_nodes):
        while True:
            p = int(rng.integers(0, t))
            if max_children is None or kids[p] < max_children:
                break
        parent.append(p)
        kids[p] += 1
        kids.append(0)
    return from_parents(parent)
