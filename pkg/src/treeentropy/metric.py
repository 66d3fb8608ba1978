"""The tree metric ``d`` and the one-dimensional decay distance ``dbar``.

For ``t <= s`` (``t`` on the root path of ``s``)::

    d(t, s) = max over v in (t, s] of (A(v) - A(t))**(1/q) * sigma(v)

with ``A(v) = sum of alpha(r)**q over r in [0, v]``.  Incomparable pairs go
through the meet: ``d(t, s) = d(t^s, t) + d(t^s, s)``.

Two facts drive the fast paths here.  For a fixed upper end ``s`` the value
``d(s, t)`` obeys ``d(s, t) = max(d(s, parent(t)), (A(t) - A(s))**(1/q) sigma(t))``,
so distances from every node to all its ancestors come out of one pass per
level.  When the weights depend only on the level, ``d`` between comparable
nodes depends only on their depths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .trees import Tree, TreeError
from .weights import WeightSystem, root_path_sums

#: entries allowed in dense per-node ancestor tables
_DENSE_LIMIT = 60_000_000
#: largest depth for which a dense level-to-level table is built
_RADIAL_TABLE_LIMIT = 6000


class MetricEvaluator:
    """Cached evaluator of ``d`` over a tree and a weight system."""

    def __init__(self, tree: Tree, ws: WeightSystem):
        if len(ws.alpha) != tree.node_count:
            raise ValueError("weight system and tree sizes differ")
        self.tree = tree
        self.ws = ws
        self.q = ws.q
        self.sigma = ws.sigma_true
        self.A = root_path_sums(tree, ws.alpha ** ws.q)
        self._anc = None
        self._radial = None
        if ws.is_level_dependent:
            la = ws.level_alpha[:tree.max_depth + 1]
            self.level_C = np.cumsum(la ** ws.q)
            self.level_sigma = ws.level_sigma[:tree.max_depth + 1] * ws.sigma_root_scale
        else:
            self.level_C = None
            self.level_sigma = None

    @property
    def level_dependent(self) -> bool:
        return self.level_C is not None

    # ----------------------------------------------------------- scalar path
    def dist(self, t: int, s: int) -> float:
        """Exact ``d(t, s)`` by walking the root paths (reference evaluation)."""
        if t == s:
            return 0.0
        tree = self.tree
        if tree.is_ancestor(t, s):
            return self._dist_down(t, s)
        if tree.is_ancestor(s, t):
            return self._dist_down(s, t)
        m = tree.meet(t, s)
        return self._dist_down(m, t) + self._dist_down(m, s)

    def _dist_down(self, t: int, s: int) -> float:
        A, sig, q = self.A, self.sigma, self.q
        best = 0.0
        v = s
        while v != t:
            best = max(best, (A[v] - A[t]) ** (1.0 / q) * sig[v])
            v = int(self.tree.parent[v])
        return best

    # -------------------------------------------------------- radial (levels)
    def radial_dist(self, n1: int, n2: int) -> float:
        """Distance between comparable nodes at depths ``n1 <= n2``."""
        if not self.level_dependent:
            raise TreeError("weights are not level-dependent")
        if n1 > n2:
            raise ValueError("need n1 <= n2")
        return float(radial_dist(self.ws.level_alpha, self.ws.level_sigma * self.ws.sigma_root_scale,
                                 self.q, n1, n2))

    def radial_table(self) -> np.ndarray:
        """``T[n1, n2]`` for all ``n1 <= n2`` (upper triangle; zero elsewhere)."""
        if self._radial is None:
            if not self.level_dependent:
                raise TreeError("weights are not level-dependent")
            D = self.tree.max_depth
            if D > _RADIAL_TABLE_LIMIT:
                raise TreeError(f"depth {D} too large for a dense level table")
            C, sig, q = self.level_C, self.level_sigma, self.q
            T = np.zeros((D + 1, D + 1))
            for n2 in range(1, D + 1):
                col = np.clip(C[n2] - C[:n2], 0.0, None) ** (1.0 / q) * sig[n2]
                T[:n2, n2] = np.maximum(T[:n2, n2 - 1], col)
            self._radial = T
        return self._radial

    def radial_many(self, n1, n2) -> np.ndarray:
        n1 = np.asarray(n1, dtype=np.int64)
        n2 = np.asarray(n2, dtype=np.int64)
        if np.all(self.level_sigma == self.level_sigma[0]):
            return np.clip(self.level_C[n2] - self.level_C[n1], 0.0, None) ** (1.0 / self.q) * self.level_sigma[0]
        return self.radial_table()[n1, n2]

    # ----------------------------------------------------- vectorized queries
    def ancestor_table(self) -> np.ndarray:
        """``D[t, k] = d(ancestor of t at depth k, t)`` (NaN below depth of t)."""
        if self._anc is None:
            tree = self.tree
            n, D = tree.node_count, tree.max_depth
            if n * (D + 1) > _DENSE_LIMIT:
                raise TreeError("tree too large for a dense ancestor table")
            dist = np.full((n, D + 1), np.nan)
            Aanc = np.full((n, D + 1), np.nan)
            dist[0, 0] = 0.0
            Aanc[0, 0] = self.A[0]
            inv_q = 1.0 / self.q
            for lev in range(1, D + 1):
                ids = tree.level(lev)
                par = tree.parent[ids]
                Aanc[ids, :lev] = Aanc[par, :lev]
                Aanc[ids, lev] = self.A[ids]
                gap = np.clip(self.A[ids, None] - Aanc[ids, :lev], 0.0, None)
                dist[ids, :lev] = np.maximum(dist[par, :lev], gap ** inv_q * self.sigma[ids, None])
                dist[ids, lev] = 0.0
            self._anc = dist
        return self._anc

    def dist_many(self, a, b) -> np.ndarray:
        """Vectorized ``d`` over paired node arrays."""
        a = np.atleast_1d(np.asarray(a, dtype=np.int64))
        b = np.atleast_1d(np.asarray(b, dtype=np.int64))
        m = self.tree.meet_many(a, b)
        dm = self.tree.depth[m]
        if self.level_dependent:
            da, db = self.tree.depth[a], self.tree.depth[b]
            return self.radial_many(dm, da) + self.radial_many(dm, db)
        tab = self.ancestor_table()
        return tab[a, dm] + tab[b, dm]

    def dist_down_many(self, anc, desc) -> np.ndarray:
        """``d(anc, desc)`` when each ``anc`` is known to be an ancestor of ``desc``."""
        anc = np.atleast_1d(np.asarray(anc, dtype=np.int64))
        desc = np.atleast_1d(np.asarray(desc, dtype=np.int64))
        da = self.tree.depth[anc]
        if self.level_dependent:
            return self.radial_many(da, self.tree.depth[desc])
        return self.ancestor_table()[desc, da]

    def distance_matrix(self, nodes=None) -> np.ndarray:
        """Dense pairwise distances (small trees or small node subsets)."""
        if nodes is None:
            nodes = np.arange(self.tree.node_count)
        nodes = np.asarray(nodes, dtype=np.int64)
        k = len(nodes)
        ii, jj = np.triu_indices(k, 1)
        out = np.zeros((k, k))
        if len(ii):
            vals = self.dist_many(nodes[ii], nodes[jj])
            out[ii, jj] = vals
            out[jj, ii] = vals
        return out

    def order_tops(self, eps: float) -> np.ndarray:
        """Depth of the shallowest ancestor ``s`` of each node with ``d(s, t) < eps``.

        By monotonicity the admissible order-net centres for ``t`` are exactly
        the ancestors at depths ``top..|t|``.
        """
        tree = self.tree
        if self.level_dependent:
            return self._level_tops(eps)[tree.depth]
        tab = self.ancestor_table()
        ok = tab < eps  # NaN compares False
        return np.argmax(ok, axis=1).astype(np.int64)

    def _level_tops(self, eps: float) -> np.ndarray:
        D = self.tree.max_depth
        C, sig, q = self.level_C, self.level_sigma, self.q
        if np.all(sig == sig[0]):
            # (C[n] - C[n1])^(1/q) sig < eps  <=>  C[n1] > C[n] - (eps/sig)^q
            thr = C - (eps / sig[0]) ** q
            tops = np.minimum(np.searchsorted(C, thr, side="right"), np.arange(D + 1))
            # align with the way distances are evaluated elsewhere
            lev = np.arange(D + 1)
            bad = ~(self.radial_many(tops, lev) < eps)
            tops[bad] += 1
            prev = np.maximum(tops - 1, 0)
            early = (tops > 0) & (self.radial_many(prev, lev) < eps)
            tops[early] -= 1
            return tops.astype(np.int64)
        T = self.radial_table()
        ok = T < eps
        ok[np.tril_indices(D + 1, -1)] = False
        np.fill_diagonal(ok, True)
        return np.argmax(ok, axis=0).astype(np.int64)


def radial_dist(level_alpha, level_sigma, q: float, n1: int, n2: int) -> float:
    """``max_{n1 < v <= n2} (sum_{n1 < k <= v} alpha_k^q)^(1/q) sigma_v`` from level tables."""
    if n1 > n2:
        raise ValueError("need n1 <= n2")
    if n1 == n2:
        return 0.0
    a = np.asarray(level_alpha[n1 + 1:n2 + 1], dtype=float) ** q
    s = np.asarray(level_sigma[n1 + 1:n2 + 1], dtype=float)
    return float(np.max(np.cumsum(a) ** (1.0 / q) * s))


# --------------------------------------------------------------------------
# decay profiles on [0, inf)


@dataclass
class DecayProfile:
    """A strictly decreasing integrable ``phi`` with tail integral ``Phi``."""

    phi: Callable[[float], float]
    closed_form: str = "numeric"  # polynomial | exponential | numeric
    gamma: float = 0.0
    c: float = 1.0
    kappa: Optional[float] = None
    x0: float = 1.0
    _Phi: Optional[Callable] = field(default=None, repr=False)

    @classmethod
    def polynomial(cls, gamma: float, c: float = 1.0) -> "DecayProfile":
        if gamma <= 1:
            raise ValueError("polynomial decay needs gamma > 1")
        return cls(phi=lambda x: c * x ** (-gamma), closed_form="polynomial",
                   gamma=gamma, c=c, kappa=2.0 ** gamma)

    @classmethod
    def exponential(cls, gamma: float, c: float = 1.0) -> "DecayProfile":
        if gamma <= 0:
            raise ValueError("exponential decay needs gamma > 0")
        return cls(phi=lambda x: c * 2.0 ** (-gamma * x), closed_form="exponential",
                   gamma=gamma, c=c, kappa=None)

    @classmethod
    def numeric(cls, phi, kappa=None, x0=1.0) -> "DecayProfile":
        return cls(phi=phi, closed_form="numeric", kappa=kappa, x0=x0)

    def Phi(self, y: float) -> float:
        """``int_y^inf phi``; ``Phi(inf) = 0``."""
        if y == math.inf:
            return 0.0
        g, c = self.gamma, self.c
        if self.closed_form == "polynomial":
            return math.inf if y <= 0 else c * y ** (1.0 - g) / (g - 1.0)
        if self.closed_form == "exponential":
            return c * 2.0 ** (-g * y) / (g * math.log(2.0))
        if y <= 0:
            val, _ = integrate.quad(self.phi, y, math.inf, limit=400)
            return float(val)
        # [y, b] directly, then x = b / u maps the rest onto (0, 1]
        b = max(2.0 * y, 1.0)
        head, _ = integrate.quad(self.phi, y, b, limit=400, epsabs=0.0, epsrel=1e-13)

        def f(u):
            v = self.phi(b / u) if u > 0 else 0.0
            return v * (b / u) / u if v > 0 else 0.0

        tail, _ = integrate.quad(f, 0.0, 1.0, limit=400, epsabs=0.0, epsrel=1e-13)
        val = head + tail
        return float(val)

    def phi_inv(self, y: float) -> float:
        if y <= 0:
            return math.inf
        g, c = self.gamma, self.c
        if self.closed_form == "polynomial":
            return (y / c) ** (-1.0 / g)
        if self.closed_form == "exponential":
            return max(0.0, math.log2(c / y) / g)
        return _invert_decreasing(self.phi, y)

    def Phi_inv(self, z: float) -> float:
        if z <= 0:
            return math.inf
        g, c = self.gamma, self.c
        if self.closed_form == "polynomial":
            return (z * (g - 1.0) / c) ** (-1.0 / (g - 1.0))
        if self.closed_form == "exponential":
            return max(0.0, math.log2(c / (z * g * math.log(2.0))) / g)
        return _invert_decreasing(self.Phi, z)

    def dominates(self, values: np.ndarray, levels: np.ndarray) -> np.ndarray:
        """Boolean mask ``values <= phi(levels)`` (levels >= 1)."""
        ph = np.array([self.phi(float(n)) for n in levels]) if self.closed_form == "numeric" \
            else self._phi_vec(levels)
        return values <= ph * (1 + 1e-12)

    def dominated_by(self, values: np.ndarray, levels: np.ndarray) -> np.ndarray:
        """Boolean mask ``values >= phi(levels)`` (levels >= 1)."""
        ph = np.array([self.phi(float(n)) for n in levels]) if self.closed_form == "numeric" \
            else self._phi_vec(levels)
        return values >= ph * (1 - 1e-12)

    def _phi_vec(self, x):
        x = np.asarray(x, dtype=float)
        if self.closed_form == "polynomial":
            return self.c * x ** (-self.gamma)
        return self.c * 2.0 ** (-self.gamma * x)


def _invert_decreasing(f, y: float) -> float:
    """Solve ``f(x) = y`` for a decreasing ``f`` on (0, inf) to 1e-12 relative."""
    lo, hi = 0.5, 1.0
    if f(hi) > y:
        while f(hi) > y:
            lo, hi = hi, hi * 2.0
            if hi > 1e15:
                return math.inf
    else:
        # bracket from above so tiny arguments (where f may blow up) are avoided
        while f(lo) <= y:
            lo, hi = lo / 2.0, lo
            if lo < 1e-12:
                return 0.0
    return optimize.brentq(lambda x: f(x) - y, lo, hi, xtol=1e-300, rtol=1e-12)


def dbar(profile: DecayProfile, y1: float, y2: float) -> float:
    """``Phi(y1) - Phi(y2)``, the integral of ``phi`` over ``[y1, y2]``."""
    if y1 > y2:
        raise ValueError("dbar needs y1 <= y2")
    if y1 == y2:
        return 0.0
    return profile.Phi(y1) - profile.Phi(y2)
