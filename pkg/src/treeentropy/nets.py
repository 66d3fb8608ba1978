"""Explicit net and separated-set constructions driven by radial decay profiles.

Everything here works from level arithmetic first (which levels, how many
nodes) and only touches a materialized tree to build and verify certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .covering import CoverCertificate, PackingCertificate, verify_certificate, verify_packing
from .metric import DecayProfile, MetricEvaluator
from .trees import TreeError

SCAN_HORIZON = 10_000


class NetError(ValueError):
    pass


# --------------------------------------------------------------------------
# level nets on (N, dbar)


@dataclass
class LevelNet:
    epsilon: float
    M_eps: list
    u_tilde: list
    u: list
    N: int
    gap_level: Optional[int] = None  # extra level added when the scan found a hole
    valid: bool = False

    @property
    def levels(self) -> list:
        pts = set(self.M_eps) | set(self.u)
        if self.gap_level is not None:
            pts.add(self.gap_level)
        return sorted(pts)


def _floor_int(x: float) -> int:
    return int(math.floor(x + 1e-12 * max(1.0, abs(x))))


def level_net(profile: DecayProfile, eps: float, horizon: int = SCAN_HORIZON) -> LevelNet:
    """``M_eps`` plus the points ``u_k`` below ``Phi^{-1}(k eps)``; a ``2 eps``-net of N.

    The direct scan over ``1..horizon`` can find integers strictly between
    ``phi^{-1}(eps)`` and ``u_N`` that no point reaches; the level
    ``floor(phi^{-1}(eps)) + 1`` is then added, which closes the hole.
    """
    if eps <= 0:
        raise NetError("eps must be positive")
    x_eps = profile.phi_inv(eps)
    if not math.isfinite(x_eps):
        raise NetError("phi^{-1}(eps) is not finite")
    M = list(range(1, _floor_int(x_eps) + 1))
    ratio = profile.Phi(x_eps) / eps
    N = max(0, _floor_int(ratio))
    u_tilde = [profile.Phi_inv(k * eps) for k in range(1, N + 1)]
    u = [_floor_int(x) for x in u_tilde]
    if N and u[-1] < x_eps:
        u[-1] = _floor_int(x_eps) + 1
    for a, b in zip(u_tilde, u_tilde[1:]):
        if not a - b > 1:
            raise NetError("consecutive u-tilde points closer than 1")
    net = LevelNet(float(eps), M, u_tilde, u, N)
    if not scan_level_net(profile, net, horizon):
        net.gap_level = _floor_int(x_eps) + 1
        if not scan_level_net(profile, net, horizon):
            return net
    net.valid = True
    return net


def _Phi_many(profile: DecayProfile, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if profile.closed_form == "polynomial":
        return profile.c * y ** (1.0 - profile.gamma) / (profile.gamma - 1.0)
    if profile.closed_form == "exponential":
        g = profile.gamma
        return profile.c * 2.0 ** (-g * y) / (g * math.log(2.0))
    return np.array([profile.Phi(float(v)) for v in y])


def scan_level_net(profile: DecayProfile, net: LevelNet, horizon: int = SCAN_HORIZON) -> bool:
    """Every ``n`` in ``1..horizon`` has a net point ``w <= n`` with ``dbar(w, n) < 2 eps``.

    Beyond the horizon the largest net point must reach infinity.
    """
    pts = np.asarray(net.levels, dtype=float)
    if len(pts) == 0:
        return False
    n = np.arange(1, horizon + 1, dtype=float)
    idx = np.searchsorted(pts, n, side="right") - 1
    if np.any(idx < 0):
        return False
    w = pts[idx]
    Pn = _Phi_many(profile, n)
    Pw = _Phi_many(profile, w)
    if not np.all(Pw - Pn < 2 * net.epsilon):
        return False
    return profile.Phi(float(pts.max())) < 2 * net.epsilon


def _check_domination(me: MetricEvaluator, profile: DecayProfile, upper: bool):
    tree, ws = me.tree, me.ws
    nodes = np.nonzero(tree.depth >= 1)[0]
    vals = (ws.alpha[nodes] * ws.sigma_true[nodes]) ** ws.q
    lev = tree.depth[nodes]
    ok = profile.dominates(vals, lev) if upper else profile.dominated_by(vals, lev)
    if not np.all(ok):
        bad = int(nodes[np.argmin(ok)])
        rel = "<=" if upper else ">="
        raise NetError(f"(alpha*sigma)^q {rel} phi(|t|) fails at node {bad} (depth {tree.depth[bad]})")


def tree_net_from_levels(me: MetricEvaluator, profile: DecayProfile, eps: float) -> CoverCertificate:
    """Whole levels ``{0} + Sbar_{eps^q}``: an order net at radius ``2^{1/q} eps``."""
    _check_domination(me, profile, upper=True)
    q = me.q
    lnet = level_net(profile, eps ** q)
    levels = [0] + [n for n in lnet.levels if n <= me.tree.max_depth]
    centers = np.concatenate([me.tree.level(n) for n in levels])
    cert = CoverCertificate(kind="order", epsilon=2.0 ** (1.0 / q) * eps,
                            centers=np.sort(centers).tolist(), construction="level_net")
    return verify_certificate(me, cert)


# --------------------------------------------------------------------------
# closed-form bound


@dataclass
class LevelProfile:
    """A non-decreasing continuous majorant (or minorant) ``rho`` of ``R(n)``."""

    rho: Callable[[float], float]
    kind: str = "numeric"  # constant | polynomial | exponential | numeric
    lam: float = 0.0

    @classmethod
    def polynomial(cls, lam: float, c: float = 1.0) -> "LevelProfile":
        return cls(lambda x: c * max(1.0, x) ** lam, "polynomial", lam)

    @classmethod
    def constant(cls, c: float = 1.0) -> "LevelProfile":
        return cls(lambda x: c, "constant", 0.0)

    @classmethod
    def exponential(cls, base: float = 2.0) -> "LevelProfile":
        return cls(lambda x: base ** x, "exponential", math.log2(base))


def _converges(rho: LevelProfile, profile: DecayProfile) -> bool:
    if rho.kind in ("constant", "polynomial") and profile.closed_form == "polynomial":
        return profile.gamma > rho.lam + 1
    if profile.closed_form == "exponential":
        if rho.kind == "exponential":
            return profile.gamma > rho.lam
        return True
    if rho.kind == "exponential":
        return False
    val, err = integrate.quad(lambda y: rho.rho(y) * profile.phi(y), 1.0, math.inf, limit=200)
    return math.isfinite(val) and err < 1e-6 * max(1.0, abs(val))


def prop7_bound(rho: LevelProfile, profile: DecayProfile, q: float, eps: float,
                mode: str = "general") -> float:
    """Three-term upper bound on ``Ntilde(T, d, eps)`` when ``R <= rho`` and ``(alpha sigma)^q <= phi``.

    mode: ``general`` integrates the last term up to ``Phi^{-1}(eps^q/2)``;
    ``convergent`` to infinity (needs ``int rho phi < inf``); ``divergent``
    from 1 instead of ``phi^{-1}(eps^q/2)``.
    """
    y = eps ** q / 2.0
    lo = profile.phi_inv(y)
    hi = profile.Phi_inv(y)
    t1, _ = integrate.quad(rho.rho, 0.0, lo + 1.0, limit=200)
    t2 = rho.rho(hi)
    f = lambda x: rho.rho(x) * profile.phi(x)  # noqa: E731
    if mode == "general":
        a, b = lo, hi
    elif mode == "convergent":
        if not _converges(rho, profile):
            raise NetError("int rho*phi diverges; convergent mode does not apply")
        a, b = lo, math.inf
    elif mode == "divergent":
        a, b = 1.0, hi
    else:
        raise NetError(f"unknown mode {mode!r}")
    t3, _ = integrate.quad(f, a, b, limit=400) if b > a else (0.0, 0.0)
    return float(t1 + t2 + 2.0 * eps ** (-q) * t3)


# --------------------------------------------------------------------------
# biased trees


@dataclass
class BiasedNetSpec:
    lam: int
    gamma: float
    q: float
    epsilon: float
    c_star: float
    J: int
    n: list  # n_1 > n_2 > ... > n_J
    nu: list
    s1_levels: int  # S1 = all levels < s1_levels
    size: int = 0
    lemma_ok: bool = False
    lemma_failures: list = field(default_factory=list)

    @property
    def size_ratio(self) -> float:
        """``size / eps^{-q(lam+1)/gamma}``."""
        return self.size * self.epsilon ** (self.q * (self.lam + 1) / self.gamma)


def _biased_levels(gamma: float, q: float, eps: float):
    prof = DecayProfile.polynomial(gamma)
    J = _floor_int(eps ** (-q / gamma))
    ns = []
    for j in range(1, J + 1):
        target = j * eps ** q
        n = max(1, math.ceil(prof.Phi_inv(target) - 1e-9))
        while n > 1 and prof.Phi(n - 1) <= target:
            n -= 1
        while prof.Phi(n) > target:
            n += 1
        ns.append(n)
    return J, ns


def biased_net_spec(lam: int, gamma: float, q: float, eps: float, c_star: float,
                    R: Optional[Callable[[int], int]] = None) -> BiasedNetSpec:
    from .trees import biased_level_sizes

    J, ns = _biased_levels(gamma, q, eps)
    if R is None:
        sizes = biased_level_sizes(lam, max(ns) if ns else 1)
        R = lambda n: int(sizes[n])  # noqa: E731
    cap = math.ceil(c_star * eps ** (-q * lam / gamma) - 1e-9)
    nu = [min(cap, R(n)) for n in ns]
    s1 = ns[-1] if ns else 1
    spec = BiasedNetSpec(lam, gamma, q, float(eps), float(c_star), J, ns, nu, s1)
    spec.size = sum(R(n) for n in range(s1)) + sum(nu)
    spec.lemma_failures = _check_biased_lemma(spec, R)
    spec.lemma_ok = not spec.lemma_failures
    return spec


def _check_biased_lemma(spec: BiasedNetSpec, R) -> list:
    """For j < J: every node of level ``n_j`` sits below one of the ``nu_{j+1}`` kept nodes."""
    bad = []
    for j in range(len(spec.n) - 1):
        shift = spec.n[j] - spec.n[j + 1]
        top_rank = (R(spec.n[j]) - 1) >> shift
        if top_rank >= spec.nu[j + 1]:
            bad.append(j + 1)
    return bad


def biased_net(me: MetricEvaluator, gamma: float, eps: float, c_star: float = 8.0,
               max_c_star: float = 2.0 ** 10):
    """Order net on a biased tree, valid at ``2^{1/q} eps``.

    ``c_star`` doubles until the certificate verifies or exceeds ``max_c_star``.
    Returns ``(spec, cert)``.
    """
    tree, ws = me.tree, me.ws
    if tree.kind != "biased":
        raise TreeError("biased_net needs a biased tree")
    q = ws.q
    n_all = np.arange(tree.max_depth + 1)
    expect = np.maximum(1.0, n_all) ** (-gamma / q)
    if not (np.allclose(ws.level_alpha, expect, rtol=1e-12) and ws.is_one_weight):
        raise NetError("biased nets need alpha = max(1,|t|)^(-gamma/q) and sigma = 1")
    lam = int(tree.params["lambda"])
    Rt = tree.R
    while True:
        spec = biased_net_spec(lam, gamma, q, eps, c_star, R=lambda n: int(Rt[n]) if n < len(Rt) else -1)
        if spec.n and spec.n[0] >= tree.max_depth:
            raise NetError(f"n_1 = {spec.n[0]} does not fit inside depth {tree.max_depth}")
        parts = [tree.level(n) for n in range(spec.s1_levels)]
        parts += [tree.level(n)[:nu] for n, nu in zip(spec.n, spec.nu)]  # ids ascend with rank
        centers = np.unique(np.concatenate(parts))
        cert = CoverCertificate(kind="order", epsilon=2.0 ** (1.0 / q) * eps,
                                centers=centers.tolist(), construction="biased")
        verify_certificate(me, cert)
        if cert.verified or c_star * 2 > max_c_star:
            spec.size = len(centers)
            return spec, cert
        c_star *= 2


# --------------------------------------------------------------------------
# separated sets


def separated_set_p9a(me: MetricEvaluator, profile: DecayProfile, eps: float) -> PackingCertificate:
    """All nodes up to level ``phi^{-1}(eps^q)``; ``eps``-separated under the lower weight bound."""
    _check_domination(me, profile, upper=False)
    tree = me.tree
    top = min(tree.max_depth, _floor_int(profile.phi_inv(eps ** me.q)))
    # at an exact tie phi(top) = eps^q the parent edges of level top sit at distance eps,
    # which rounding can push just below; drop such a level rather than emit a failing set
    while top >= 1:
        ids = tree.level(top)
        if me.dist_many(tree.parent[ids], ids).min() >= eps:
            break
        top -= 1
    pts = np.nonzero(tree.depth <= top)[0]
    cert = PackingCertificate(epsilon=float(eps), points=pts.tolist(), construction="p9a")
    return verify_packing(me, cert)


@dataclass
class SeparatedLevels:
    epsilon: float
    q: float
    N: int
    m: int
    v: list  # v_1 > v_2 > ... > v_m
    low4_holds: bool = False

    def size(self, R: Callable[[int], float]) -> float:
        return sum(R(vk) for vk in self.v[1:])

    def log_size(self, log_R: Callable[[int], float]) -> float:
        if len(self.v) < 2:
            return -math.inf
        return float(logsumexp([log_R(vk) for vk in self.v[1:]]))


def p9c_levels(profile: DecayProfile, q: float, eps: float) -> SeparatedLevels:
    y = eps ** q
    ratio = profile.Phi(profile.phi_inv(y)) / y
    N = _floor_int(ratio)
    m = N // 3
    v = [_floor_int(profile.Phi_inv(3 * k * y)) + 1 for k in range(1, m + 1)]
    return SeparatedLevels(float(eps), q, N, m, v, low4_holds=m >= ratio / 4)


def separated_set_p9c(me: MetricEvaluator, profile: DecayProfile, eps: float) -> PackingCertificate:
    """For each node at level ``v_k`` one descendant at level ``v_{k-1}`` (k = 2..m)."""
    tree, ws = me.tree, me.ws
    if not ws.is_one_weight:
        raise NetError("this construction is for one-weight systems (sigma = 1)")
    _check_domination(me, profile, upper=False)
    lv = p9c_levels(profile, ws.q, eps)
    if lv.v and lv.v[0] > tree.max_depth:
        raise NetError(f"level v_1 = {lv.v[0]} is below the materialized depth {tree.max_depth}")
    cc = tree.child_count
    if np.any(cc[tree.depth < (lv.v[0] if lv.v else 0)] == 0):
        raise NetError("some node above the working depth has no child")
    pts = []
    for k in range(1, lv.m):
        cur = tree.level(lv.v[k]).copy()
        for _ in range(lv.v[k - 1] - lv.v[k]):
            cur = tree._child_idx[tree._child_ptr[cur]]  # first child
        pts.append(cur)
    pts = np.sort(np.concatenate(pts)) if pts else np.empty(0, dtype=np.int64)
    cert = PackingCertificate(epsilon=float(eps), points=pts.tolist(), construction="p9c")
    return verify_packing(me, cert)


def binary_lognet_counts(gamma: float, q: float, eps_grid) -> list:
    """Natural-log bounds for binary trees with ``alpha = max(1,|t|)^(-gamma/q)``, ``sigma = 1``.

    ``log_upper``: the level net at ``eps / 2^{1/q}`` (an order ``eps``-net), so
    ``log Ntilde(eps) <= log_upper``.  ``log_lower``: the separated set at
    ``2 eps``, so ``log N(eps) >= log_lower`` (``-inf`` when the set is empty).
    """
    prof = DecayProfile.polynomial(gamma)
    ln2 = math.log(2.0)
    out = []
    for eps in eps_grid:
        e_up = eps / 2.0 ** (1.0 / q)
        lnet = level_net(prof, e_up ** q)
        levels = [0] + lnet.levels
        log_up = float(logsumexp([n * ln2 for n in levels]))
        sep = p9c_levels(prof, q, 2 * eps)
        log_lo = sep.log_size(lambda n: n * ln2)
        out.append({"epsilon": float(eps), "log_upper": log_up, "log_lower": log_lo,
                    "net_valid": lnet.valid, "m": sep.m, "deepest_level": max(levels)})
    return out


def counterexample_weights(tree, gamma: float, q: float):
    """Two-weight system where the one-weight distance estimate breaks.

    ``alpha = 2^{|t|/q}``, ``sigma = max(1,|t|)^{-gamma/q} 2^{-|t|/q}``: the product
    matches ``phi(x) = x^{-gamma}`` but chains are far shorter than ``dbar``.
    """
    from .weights import assign, per_level

    n = np.arange(tree.max_depth + 1, dtype=float)
    a = 2.0 ** (n / q)
    s = np.maximum(1.0, n) ** (-gamma / q) * 2.0 ** (-n / q)
    return assign(tree, per_level(a), per_level(s), q)
