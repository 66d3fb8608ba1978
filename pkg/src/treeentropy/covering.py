"""Covering numbers, order covering numbers and separated sets on trees.

Ball covers ``N(T, d, eps)`` are exact set-cover problems; they are solved by
branch-and-bound on small trees and bracketed otherwise.

Order covers are different.  Monotonicity of ``d`` makes the admissible
centres for a node ``t`` a vertical segment ``[top(t), t]`` of its root path,
so a minimal order net is a minimum hitting set of vertical paths.  Taking,
deepest top first, the top of every path not yet hit is optimal (exchange
argument), which :func:`min_order_net` implements as one bottom-up level
sweep.  All comparisons against ``eps`` are strict (open balls).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .metric import MetricEvaluator

EXACT_LIMIT = 512
_PAIR_CHUNK = 1 << 21


class CoverError(ValueError):
    pass


@dataclass
class CoverCertificate:
    kind: str  # "ball" | "order"
    epsilon: float
    centers: list
    verified: bool = False
    optimal: bool = False
    construction: Optional[str] = None
    violations: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.centers)

    def to_json(self) -> str:
        d = asdict(self)
        d["centers"] = [int(c) for c in self.centers]
        d["violations"] = [int(v) for v in self.violations[:100]]
        if d["construction"] is None:
            del d["construction"]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CoverCertificate":
        return cls(**json.loads(text))


@dataclass
class PackingCertificate:
    epsilon: float
    points: list
    pairwise_min: float = float("inf")
    verified: bool = False
    construction: Optional[str] = None

    @property
    def size(self) -> int:
        return len(self.points)

    def to_json(self) -> str:
        d = asdict(self)
        d["points"] = [int(p) for p in self.points]
        if d["construction"] is None:
            del d["construction"]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PackingCertificate":
        return cls(**json.loads(text))


@dataclass
class IntervalFamily:
    intervals: list  # (t_i, s_i) with t_i strictly below s_i
    epsilon: float
    verified: bool = False

    def __len__(self):
        return len(self.intervals)


@dataclass
class CoveringProfile:
    eps_grid: list
    records: list  # one dict per eps


# --------------------------------------------------------------------------
# coverage sets


def coverage_sets(me: MetricEvaluator, eps: float, kind: str = "ball") -> np.ndarray:
    """``covered[s, t]`` is True when centre ``s`` covers node ``t``."""
    D = me.distance_matrix()
    cov = D < eps
    if kind == "ball":
        return cov
    if kind == "order":
        tree = me.tree
        n = tree.node_count
        anc = np.zeros((n, n), dtype=bool)
        for t in range(n):
            anc[list(tree.ancestors(t)), t] = True
        return cov & anc
    raise CoverError(f"unknown cover kind {kind!r}")


# --------------------------------------------------------------------------
# set cover


def _bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def _greedy(masks: Sequence[int], universe: int) -> list:
    covered, chosen = 0, []
    while covered != universe:
        gains = [bin(m & ~covered).count("1") for m in masks]
        best = int(np.argmax(gains))
        if gains[best] == 0:
            raise CoverError("the sets do not cover the universe")
        chosen.append(best)
        covered |= masks[best]
    return chosen


def _exact(masks: Sequence[int], universe: int) -> list:
    n_elem = universe.bit_length()
    elem_sets = [[] for _ in range(n_elem)]
    for i, m in enumerate(masks):
        for e in _bits(m):
            elem_sets[e].append(i)
    if any(not s for s in elem_sets):
        raise CoverError("the sets do not cover the universe")
    nbr = [0] * n_elem
    for e in range(n_elem):
        acc = 0
        for i in elem_sets[e]:
            acc |= masks[i]
        nbr[e] = acc

    best = list(_greedy(masks, universe))

    def lower_bound(uncovered: int) -> int:
        # pairwise non-co-coverable elements each need their own set
        blocked, cnt = 0, 0
        for e in sorted(_bits(uncovered), key=lambda e: len(elem_sets[e])):
            if not (blocked >> e) & 1:
                cnt += 1
                blocked |= nbr[e]
        return cnt

    def search(covered: int, chosen: list):
        nonlocal best
        if covered == universe:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        uncovered = universe & ~covered
        if len(chosen) + lower_bound(uncovered) >= len(best):
            return
        e = min(_bits(uncovered), key=lambda e: len(elem_sets[e]))
        options = sorted(elem_sets[e], key=lambda i: -bin(masks[i] & uncovered).count("1"))
        for i in options:
            chosen.append(i)
            search(covered | masks[i], chosen)
            chosen.pop()

    search(0, [])
    return best


def solve_min_cover(sets, mode: str = "exact", *, kind: str = "ball", epsilon: float = float("nan"),
                    labels=None, limit: int = EXACT_LIMIT) -> CoverCertificate:
    """Minimum (exact) or greedy cover of all columns by rows of ``sets``.

    ``sets`` is a boolean matrix ``[candidate, element]``.  Returned centres
    are ``labels[i]`` for the chosen rows (row indices when ``labels`` is None).
    """
    sets = np.asarray(sets, dtype=bool)
    n_cand, n_elem = sets.shape
    if mode == "exact" and n_cand > limit:
        raise CoverError(
            f"{n_cand} candidates exceed the exact limit {limit}; use mode='greedy'"
        )
    weights = 1 << np.arange(n_elem, dtype=object)
    masks = [int(np.sum(weights[row])) if row.any() else 0 for row in sets]
    universe = (1 << n_elem) - 1
    if mode == "exact":
        chosen = _exact(masks, universe)
    elif mode == "greedy":
        chosen = _greedy(masks, universe)
    else:
        raise CoverError(f"unknown mode {mode!r}")
    labels = np.arange(n_cand) if labels is None else np.asarray(labels)
    return CoverCertificate(kind=kind, epsilon=float(epsilon),
                            centers=sorted(int(labels[i]) for i in chosen),
                            verified=False, optimal=(mode == "exact"))


def covering_number(me: MetricEvaluator, eps: float, kind: str = "ball",
                    mode: str = "exact", limit: int = EXACT_LIMIT) -> CoverCertificate:
    """``N(T, d, eps)`` (kind='ball') or ``Ntilde`` (kind='order') with its witness."""
    if kind == "order" and mode == "exact":
        return min_order_net(me, eps)
    cert = solve_min_cover(coverage_sets(me, eps, kind), mode, kind=kind, epsilon=eps,
                           limit=limit)
    return verify_certificate(me, cert)


def min_order_net(me: MetricEvaluator, eps: float) -> CoverCertificate:
    """Minimum order ``eps``-net via the vertical-path hitting-set sweep."""
    tree = me.tree
    tops = me.order_tops(eps)
    chosen = _hit_vertical_paths(tree, tops)
    cert = CoverCertificate(kind="order", epsilon=float(eps),
                            centers=np.nonzero(chosen)[0].tolist(), optimal=True)
    return verify_certificate(me, cert)


def _hit_vertical_paths(tree, tops: np.ndarray) -> np.ndarray:
    # pending[x]: deepest top among paths below x not yet hit (-1 if none).
    # The deepest pending top must be hit at the top itself.
    n = tree.node_count
    pending = np.full(n, -1, dtype=np.int64)
    chosen = np.zeros(n, dtype=bool)
    for lev in range(tree.max_depth, -1, -1):
        ids = tree.level(lev)
        g = np.maximum(tops[ids], pending[ids])
        pick = g == lev
        chosen[ids] = pick
        if lev > 0:
            h = np.where(pick, -1, g)
            np.maximum.at(pending, tree.parent[ids], h)
    return chosen


def order_covering_number(me: MetricEvaluator, eps: float) -> int:
    tops = me.order_tops(eps)
    return int(np.count_nonzero(_hit_vertical_paths(me.tree, tops)))


# --------------------------------------------------------------------------
# verification


def _nearest_center_above(tree, is_center: np.ndarray) -> np.ndarray:
    near = np.where(is_center, np.arange(tree.node_count), -1)
    for lev in range(1, tree.max_depth + 1):
        ids = tree.level(lev)
        near[ids] = np.where(is_center[ids], ids, near[tree.parent[ids]])
    return near


def verify_certificate(me: MetricEvaluator, cert: CoverCertificate) -> CoverCertificate:
    """Check the covering property literally; fills ``verified`` and ``violations``."""
    tree = me.tree
    n = tree.node_count
    centers = np.asarray(sorted(set(int(c) for c in cert.centers)), dtype=np.int64)
    if len(centers) and (centers.min() < 0 or centers.max() >= n):
        raise CoverError("certificate references nodes outside the tree")
    nodes = np.arange(n)
    if cert.kind == "order":
        is_c = np.zeros(n, dtype=bool)
        is_c[centers] = True
        near = _nearest_center_above(tree, is_c)
        bad = near < 0
        ok_ids = nodes[~bad]
        d = me.dist_down_many(near[ok_ids], ok_ids) if len(ok_ids) else np.empty(0)
        far = np.zeros(n, dtype=bool)
        far[ok_ids] = ~(d < cert.epsilon)
        violations = nodes[bad | far]
    elif cert.kind == "ball":
        best = np.full(n, np.inf)
        for c in centers:
            best = np.minimum(best, me.dist_many(np.full(n, c), nodes))
        violations = nodes[~(best < cert.epsilon)]
    else:
        raise CoverError(f"unknown certificate kind {cert.kind!r}")
    cert.violations = violations.tolist()
    cert.verified = len(violations) == 0
    return cert


def _pair_min(me: MetricEvaluator, points: np.ndarray) -> float:
    k = len(points)
    if k < 2:
        return float("inf")
    best = float("inf")
    tree = me.tree
    fast = me.level_dependent and tree.rank is not None
    for i0 in range(0, k - 1, max(1, _PAIR_CHUNK // k)):
        i1 = min(k - 1, i0 + max(1, _PAIR_CHUNK // k))
        ii, jj = [], []
        for i in range(i0, i1):
            jj.append(np.arange(i + 1, k))
            ii.append(np.full(k - i - 1, i))
        a = points[np.concatenate(ii)]
        b = points[np.concatenate(jj)]
        if fast:
            d = _rank_dist(me, a, b)
        else:
            d = me.dist_many(a, b)
        best = min(best, float(d.min()))
    return best


def _rank_dist(me, a, b):
    """Pairwise ``d`` for binary/biased trees using level ranks for the meet."""
    tree = me.tree
    da, db = tree.depth[a], tree.depth[b]
    swap = da > db
    lo_n = np.where(swap, db, da)
    hi_n = np.where(swap, da, db)
    lo_r = np.where(swap, tree.rank[b], tree.rank[a])
    hi_r = np.where(swap, tree.rank[a], tree.rank[b])
    shift = np.minimum(hi_n - lo_n, 63)
    x = lo_r ^ (hi_r >> shift)
    _, e = np.frexp(x.astype(float))
    dm = lo_n - np.where(x > 0, e, 0)
    return me.radial_many(dm, lo_n) + me.radial_many(dm, hi_n)


def verify_packing(me: MetricEvaluator, cert: PackingCertificate) -> PackingCertificate:
    pts = np.asarray(sorted(set(int(p) for p in cert.points)), dtype=np.int64)
    if len(pts) != len(cert.points):
        cert.verified = False
        return cert
    cert.pairwise_min = _pair_min(me, pts)
    cert.verified = cert.pairwise_min >= cert.epsilon
    return cert


# --------------------------------------------------------------------------
# separated sets and the constructive transforms


def maximal_separated_set(me: MetricEvaluator, eps: float) -> PackingCertificate:
    """Greedy maximal ``eps``-separated set scanned in level order."""
    tree = me.tree
    order = np.concatenate(tree.levels)
    chosen = []
    mind = np.full(tree.node_count, np.inf)  # distance to the chosen set
    for t in order:
        if mind[t] >= eps:
            chosen.append(int(t))
            nodes = np.arange(tree.node_count)
            mind = np.minimum(mind, me.dist_many(np.full(len(nodes), t), nodes))
    cert = PackingCertificate(epsilon=float(eps), points=chosen)
    return verify_packing(me, cert)


def separated_to_intervals(me: MetricEvaluator, eps: float) -> IntervalFamily:
    """Disjoint order intervals ``(t_j, s_j]`` with ``d(t_j, s_j) >= eps``.

    Starts from a maximal ``2 eps``-separated set; at least
    ``N(T, d, 2 eps) - 1`` intervals come out.
    """
    tree = me.tree
    sep = maximal_separated_set(me, 2 * eps)
    pts = np.asarray(sep.points, dtype=np.int64)
    if len(pts) == 0:
        return IntervalFamily([], float(eps), True)
    from_root = me.dist_many(np.zeros(len(pts), dtype=np.int64), pts)
    near_root = np.nonzero(from_root < eps)[0]
    if len(near_root) > 1:
        raise CoverError("two separated points close to the root; separation is broken")
    keep = np.ones(len(pts), dtype=bool)
    keep[near_root] = False
    tops = me.order_tops(eps)
    intervals = []
    for s in pts[keep]:
        top = tree.ancestor_at_depth(int(s), int(tops[s]))
        t = int(tree.parent[top])
        intervals.append((t, int(s)))
    fam = IntervalFamily(intervals, float(eps))
    return verify_intervals(me, fam)


def verify_intervals(me: MetricEvaluator, fam: IntervalFamily) -> IntervalFamily:
    tree = me.tree
    used = np.zeros(tree.node_count, dtype=bool)
    ok = True
    for t, s in fam.intervals:
        if not (tree.is_ancestor(t, s) and t != s):
            ok = False
            break
        if not me.dist(t, s) >= fam.epsilon:
            ok = False
            break
        seg = tree.order_interval(t, s, half_open=True)
        if used[seg].any():
            ok = False
            break
        used[seg] = True
    fam.verified = ok
    return fam


def order_net_from_cover(me: MetricEvaluator, cert: CoverCertificate) -> CoverCertificate:
    """Turn a verified ball ``eps``-net into an order ``2 eps``-net of no larger size.

    Each centre ``s`` is replaced by the shallowest meet ``r ^ s`` over the
    ball ``B_eps(s)``.
    """
    if cert.kind != "ball" or not cert.verified:
        raise CoverError("need a verified ball certificate")
    tree = me.tree
    n = tree.node_count
    nodes = np.arange(n)
    out = set()
    for s in cert.centers:
        d = me.dist_many(np.full(n, s), nodes)
        ball = nodes[d < cert.epsilon]
        meets = tree.meet_many(ball, np.full(len(ball), s))
        out.add(int(meets[np.argmin(tree.depth[meets])]))
    new = CoverCertificate(kind="order", epsilon=2 * cert.epsilon, centers=sorted(out))
    return verify_certificate(me, new)


# --------------------------------------------------------------------------
# profiles


def covering_profile(me: MetricEvaluator, eps_grid, exact_limit: int = EXACT_LIMIT,
                     greedy_limit: int = 1024) -> CoveringProfile:
    """``N`` (exact or bracketed) and exact ``Ntilde`` over a decreasing grid."""
    grid = [float(e) for e in eps_grid]
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise CoverError("eps grid must be strictly decreasing")
    n = me.tree.node_count
    records = []
    for eps in grid:
        rec = {"epsilon": eps, "Ntilde": order_covering_number(me, eps)}
        if n <= exact_limit:
            N = covering_number(me, eps, "ball", "exact").size
            rec.update(N_exact=N, N_lower=N, N_upper=N)
        else:
            lower = maximal_separated_set(me, 2 * eps).size
            if n <= greedy_limit:
                upper = covering_number(me, eps, "ball", "greedy").size
            else:
                upper = maximal_separated_set(me, eps).size
            rec.update(N_exact=None, N_lower=lower, N_upper=min(upper, rec["Ntilde"]))
        assert rec["N_lower"] <= rec["N_upper"] <= rec["Ntilde"]
        records.append(rec)
    for a, b in zip(records, records[1:]):
        assert b["Ntilde"] >= a["Ntilde"]
        if a["N_exact"] is not None:
            assert b["N_exact"] >= a["N_exact"]
    return CoveringProfile(grid, records)
