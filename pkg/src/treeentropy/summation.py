"""The weighted summation operator ``V: l1(T) -> lq(T)`` and its building blocks.

``(V x)(t) = alpha(t) * sum over s >= t of sigma(s) x(s)``, so the column of
``delta_s`` is ``sigma(s) * alpha`` restricted to the root path of ``s``.
Operators are kept as scipy CSC matrices whose column ``t`` is that path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .covering import EXACT_LIMIT, IntervalFamily, solve_min_cover
from .trees import Tree
from .weights import WeightSystem, dyadic_round, root_path_sums

ENTROPY_MAX_NODES = 12
ENTROPY_MAX_N = 4
GRID_CAP = 400_000


class OperatorError(ValueError):
    pass


def _paths(tree: Tree):
    return [np.fromiter(tree.ancestors(t), dtype=np.int64) for t in range(tree.node_count)]


@dataclass(eq=False)
class OperatorBundle:
    tree: Tree
    ws: WeightSystem
    matrix: sparse.csc_matrix = field(init=False, repr=False)

    def __post_init__(self):
        tree, ws = self.tree, self.ws
        paths = _paths(tree)
        sig = ws.sigma_true
        rows = np.concatenate(paths)
        cols = np.repeat(np.arange(tree.node_count), [len(p) for p in paths])
        vals = ws.alpha[rows] * sig[cols]
        n = tree.node_count
        self.matrix = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
        self.matrix.sort_indices()

    @property
    def q(self) -> float:
        return self.ws.q

    def column(self, t: int):
        """``(root path of t, coefficients)``."""
        lo, hi = self.matrix.indptr[t], self.matrix.indptr[t + 1]
        return self.matrix.indices[lo:hi].copy(), self.matrix.data[lo:hi].copy()

    def dense_columns(self) -> np.ndarray:
        return self.matrix.toarray()


def apply_V(ob: OperatorBundle, x) -> np.ndarray:
    """``V x`` in one bottom-up pass (``x`` dense, or a ``{node: value}`` dict)."""
    tree, ws = ob.tree, ob.ws
    n = tree.node_count
    if isinstance(x, dict):
        dense = np.zeros(n)
        for k, v in x.items():
            dense[int(k)] += v
        x = dense
    acc = ws.sigma_true * np.asarray(x, dtype=float)
    for lev in range(tree.max_depth, 0, -1):
        ids = tree.level(lev)
        np.add.at(acc, tree.parent[ids], acc[ids])
    return ws.alpha * acc


def operator_norm(ob: OperatorBundle) -> float:
    """``max_t ||V delta_t||_q``, the norm of ``V`` on ``l1``."""
    A = root_path_sums(ob.tree, ob.ws.alpha ** ob.q)
    return float(np.max(ob.ws.sigma_true * A ** (1.0 / ob.q)))


def lq_norm(x, q: float) -> float:
    return float(np.sum(np.abs(x) ** q) ** (1.0 / q))


# --------------------------------------------------------------------------
# dyadic factorization


@dataclass(eq=False)
class DyadicFactorization:
    bundle: OperatorBundle
    sigma_hat: np.ndarray  # normalized, powers of two
    m: np.ndarray  # band index: t in I_m
    scale: float  # sigma(root); folded into W
    K: list  # K[t] = sorted band indices met on [0, t]
    theta: list  # theta[t][k] = deepest node of I_k on [0, t]
    W: sparse.csc_matrix = field(repr=False)
    Z: sparse.csc_matrix = field(repr=False)
    Delta: np.ndarray = field(repr=False)

    def z_column_l1(self) -> np.ndarray:
        return np.asarray(abs(self.Z).sum(axis=0)).ravel()

    def residual(self) -> np.ndarray:
        """Column-wise ``||V - W Z Delta||_q / ||V||_q``."""
        V = self.bundle.matrix
        P = (self.W @ self.Z @ sparse.diags(self.Delta)).tocsc()
        D = (V - P).toarray()
        q = self.bundle.q
        num = np.sum(np.abs(D) ** q, axis=0) ** (1.0 / q)
        den = np.sum(np.abs(V.toarray()) ** q, axis=0) ** (1.0 / q)
        return num / den


def factorize(ob: OperatorBundle) -> DyadicFactorization:
    tree, ws = ob.tree, ob.ws
    n = tree.node_count
    sig_hat, m = dyadic_round(ws)
    scale = ws.sigma_root_scale
    paths = _paths(tree)
    w_rows, w_cols, w_vals = [], [], []
    z_rows, z_cols, z_vals = [], [], []
    K, theta = [], []
    for t in range(n):
        path = paths[t]
        bands = m[path]
        mt = int(m[t])
        same = path[bands == mt]
        w_rows.append(same)
        w_cols.append(np.full(len(same), t))
        w_vals.append(scale * 2.0 ** (-mt) * ws.alpha[same])
        # bands along a root path are non-decreasing, so the last hit is the deepest
        th = {}
        for node, k in zip(path, bands):
            th[int(k)] = int(node)
        ks = sorted(th)
        K.append(ks)
        theta.append(th)
        z_rows.append(np.array([th[k] for k in ks], dtype=np.int64))
        z_cols.append(np.full(len(ks), t))
        z_vals.append(np.array([2.0 ** (k - mt) for k in ks]))
    cat = np.concatenate
    W = sparse.csc_matrix((cat(w_vals), (cat(w_rows), cat(w_cols))), shape=(n, n))
    Z = sparse.csc_matrix((cat(z_vals), (cat(z_rows), cat(z_cols))), shape=(n, n))
    Delta = ws.sigma / sig_hat
    return DyadicFactorization(ob, sig_hat, m, scale, K, theta, W, Z, Delta)


def hat_weights(fact: DyadicFactorization) -> WeightSystem:
    """The weight system with sigma replaced by its dyadic rounding (same true scale)."""
    from .weights import assign, per_node

    ws = fact.bundle.ws
    return assign(fact.bundle.tree, per_node(ws.alpha), per_node(fact.sigma_hat * fact.scale), ws.q)


def cover_DW(fact: DyadicFactorization, eps: float, mode: str = "auto") -> int:
    """``N(D_W, ||.||_q, eps)`` with centres from ``D_W`` and the origin."""
    q = fact.bundle.q
    pts = np.unique(np.round(fact.W.toarray().T, 15), axis=0)
    cands = np.vstack([pts, np.zeros((1, pts.shape[1]))])
    diff = cands[:, None, :] - pts[None, :, :]
    dist = np.sum(np.abs(diff) ** q, axis=2) ** (1.0 / q)
    sets = dist < eps
    if mode == "auto":
        mode = "exact" if len(cands) <= EXACT_LIMIT else "greedy"
    return solve_min_cover(sets, mode, epsilon=eps).size


# --------------------------------------------------------------------------
# inscription of Id: l1^m -> lq^m


@dataclass
class Inscription:
    intervals: list
    v: list
    y: list  # sparse dicts
    z: list  # dense vectors
    b: list  # dense vectors
    beta: np.ndarray
    gram: np.ndarray  # gram[i, j] = <z_j, b_i>
    epsilon: float

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.gram).copy()

    def identity_residual(self) -> float:
        """``max |Delta P V J - Id_m|`` with ``Delta = diag(1 / <z_i, b_i>)``."""
        m = len(self.v)
        if m == 0:
            return 0.0
        recon = self.gram / self.diagonal[:, None]
        return float(np.max(np.abs(recon - np.eye(m))))

    def project(self, zvec: np.ndarray) -> np.ndarray:
        return np.array([float(zvec @ bi) for bi in self.b])


def build_inscription(ob: OperatorBundle, family: IntervalFamily) -> Inscription:
    if not family.verified:
        raise OperatorError("interval family is not verified")
    tree, ws, q = ob.tree, ob.ws, ob.q
    n = tree.node_count
    qc = q / (q - 1.0)
    A = root_path_sums(tree, ws.alpha ** q)
    sig = ws.sigma_true
    vs, ys, zs, bs, betas = [], [], [], [], []
    for t, s in family.intervals:
        seg = tree.order_interval(t, s, half_open=True)  # (t, s], top down
        seg = np.asarray(seg, dtype=np.int64)
        vals = (A[seg] - A[t]) ** (1.0 / q) * sig[seg]
        v = int(seg[int(np.argmax(vals))])
        J = seg[: int(np.nonzero(seg == v)[0][0]) + 1]
        y = {v: 1.0}
        y[t] = y.get(t, 0.0) - sig[v] / sig[t]
        z = np.zeros(n)
        z[J] = sig[v] * ws.alpha[J]
        beta = float(np.sum(ws.alpha[J] ** q)) ** (1.0 / qc)
        b = np.zeros(n)
        b[J] = ws.alpha[J] ** (q - 1.0) / beta
        vs.append(v)
        ys.append(y)
        zs.append(z)
        bs.append(b)
        betas.append(beta)
    Zm = np.array(zs).reshape(len(zs), n)
    Bm = np.array(bs).reshape(len(bs), n)
    gram = Bm @ Zm.T
    return Inscription(list(family.intervals), vs, ys, zs, bs, np.array(betas), gram,
                       family.epsilon)


def check_inscription(ob: OperatorBundle, ins: Inscription, n_probes: int = 10_000,
                      rng: Optional[np.random.Generator] = None) -> dict:
    """All the algebraic facts the inscription relies on, evaluated literally."""
    q = ob.q
    qc = q / (q - 1.0)
    m = len(ins.v)
    out = {"m": m}
    out["y_l1_max"] = max((sum(abs(v) for v in y.values()) for y in ins.y), default=0.0)
    out["b_norm_err"] = max((abs(lq_norm(b, qc) - 1.0) for b in ins.b), default=0.0)
    off = ins.gram - np.diag(np.diag(ins.gram))
    out["offdiag_max"] = float(np.max(np.abs(off))) if m else 0.0
    out["diag_min"] = float(np.min(ins.diagonal)) if m else math.inf
    out["diag_ok"] = bool(m == 0 or np.all(ins.diagonal >= ins.epsilon))
    out["identity_residual"] = ins.identity_residual()
    vz = [np.max(np.abs(apply_V(ob, y) - z)) / max(1e-300, np.max(np.abs(z)))
          for y, z in zip(ins.y, ins.z)]
    out["Vy_minus_z"] = float(max(vz, default=0.0))
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    if m:
        Bm = np.array(ins.b)
        n = Bm.shape[1]
        for lo in range(0, n_probes, 1000):
            k = min(1000, n_probes - lo)
            Zp = rng.standard_normal((k, n)) * rng.exponential(size=(k, 1))
            # a share of probes concentrated on the interval supports
            Zp[: k // 2] *= (Bm.sum(axis=0) != 0)
            pz = np.sum(np.abs(Zp @ Bm.T) ** q, axis=1) ** (1.0 / q)
            nz = np.sum(np.abs(Zp) ** q, axis=1) ** (1.0 / q)
            worst = max(worst, float(np.max(pz / np.maximum(nz, 1e-300))))
    out["P_ratio_max"] = worst
    out["ok"] = bool(out["offdiag_max"] == 0.0 and out["diag_ok"] and out["y_l1_max"] <= 2.0
                     and out["identity_residual"] == 0.0 and out["Vy_minus_z"] <= 1e-12
                     and worst <= 1.0 + 1e-12 and out["b_norm_err"] <= 1e-12)
    return out


# --------------------------------------------------------------------------
# entropy-number brackets for tiny operators


def _grid(m: int, k: int):
    """Integer vectors in Z^m with l1 norm <= k (coefficients are multiples of 1/k)."""
    out = [np.zeros((1, m), dtype=np.int64)]
    # supports of size s with positive parts summing to <= k, then signs
    for s in range(1, min(m, k) + 1):
        comps = [c for c in itertools.combinations_with_replacement(range(1, k + 1), s)
                 if sum(c) <= k]
        mags = set()
        for c in comps:
            mags.update(itertools.permutations(c))
        mags = np.array(sorted(mags), dtype=np.int64)
        signs = np.array(list(itertools.product([-1, 1], repeat=s)), dtype=np.int64)
        for supp in itertools.combinations(range(m), s):
            block = (mags[:, None, :] * signs[None, :, :]).reshape(-1, s)
            full = np.zeros((len(block), m), dtype=np.int64)
            full[:, supp] = block
            out.append(full)
    return np.vstack(out)


def _grid_size(m: int, k: int) -> int:
    # number of integer points with l1 norm <= k in dimension m
    return sum(2 ** s * math.comb(m, s) * math.comb(k, s) for s in range(0, min(m, k) + 1))


def _lq_rows(X, q):
    return np.sum(np.abs(X) ** q, axis=-1) ** (1.0 / q)


def _k_centre_radius(points: np.ndarray, K: int, q: float) -> float:
    """Greedy farthest-first centres; covering radius of ``points``."""
    d = _lq_rows(points - points[0], q)
    for _ in range(K - 1):
        nxt = int(np.argmax(d))
        d = np.minimum(d, _lq_rows(points - points[nxt], q))
    return float(d.max())


def _packing_lower(points: np.ndarray, M: int, q: float) -> float:
    """Farthest-point sample of ``M`` points; half their minimum pairwise distance."""
    if len(points) < M:
        return 0.0
    start = int(np.argmax(_lq_rows(points, q)))
    chosen = [start]
    d = _lq_rows(points - points[start], q)
    for _ in range(M - 1):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, _lq_rows(points - points[nxt], q))
    sel = points[chosen]
    pair = _lq_rows(sel[:, None, :] - sel[None, :, :], q)
    pair[np.diag_indices(M)] = np.inf
    return float(pair.min()) / 2.0


def _error_radius(C: np.ndarray, h: float, budget: float, q: float,
                  max_vertices: int = 200_000) -> float:
    """``max ||sum_t w_t C_t||_q`` over ``|w_t| <= h``, ``sum |w_t| <= budget``.

    A convex function peaks at a vertex of that polytope; vertices are
    enumerated when there are few of them, otherwise the sorted-norm
    triangle bound is used.
    """
    m = len(C)
    norms = np.sort(_lq_rows(C, q))[::-1]
    b = min(budget / h, float(m))
    full = int(math.floor(b + 1e-12))
    frac = b - full if full < m else 0.0
    tri = h * (norms[:full].sum() + (frac * norms[full] if full < m else 0.0))
    n_vert = math.comb(m, full) * 2 ** full * (2 * (m - full) if frac > 1e-12 else 1)
    if n_vert > max_vertices:
        return float(tri)
    best = 0.0
    signs = np.array(list(itertools.product([-1.0, 1.0], repeat=full))).reshape(-1, full)
    for S in itertools.combinations(range(m), full):
        base = signs @ C[list(S)] * h if full else np.zeros((1, C.shape[1]))
        if frac > 1e-12:
            rest = [j for j in range(m) if j not in S]
            extra = np.vstack([C[rest], -C[rest]]) * (frac * h)
            vals = _lq_rows(base[:, None, :] + extra[None, :, :], q)
        else:
            vals = _lq_rows(base, q)
        best = max(best, float(vals.max()))
    return min(best, float(tri))


@dataclass
class EntropyBracket:
    n: int
    lower: float
    upper: float
    steps: list  # per refinement: (h, delta, raw_lower, raw_upper, lower, upper)


def entropy_bruteforce(ob: OperatorBundle, n: int, steps=(2, 4, 8),
                       family: Optional[IntervalFamily] = None,
                       grid_cap: int = GRID_CAP) -> EntropyBracket:
    """Bracket ``e_n(V)``, the radius needed to cover ``aco(columns)`` by ``2^{n-1}`` balls.

    The lower end comes from packings (and an inscription when ``family`` is
    given); the upper end from greedy centres on a coefficient grid of step
    ``1/k``, plus the grid's worst-case distance to the hull.  Successive grids
    are intersected, so the bracket can only shrink.
    """
    tree = ob.tree
    if tree.node_count > ENTROPY_MAX_NODES:
        raise OperatorError(f"at most {ENTROPY_MAX_NODES} nodes")
    if not 1 <= n <= ENTROPY_MAX_N:
        raise OperatorError(f"n must lie in 1..{ENTROPY_MAX_N}")
    q = ob.q
    C = ob.dense_columns().T  # rows are columns of V
    m = len(C)
    norms = _lq_rows(C, q)
    e1 = float(norms.max())
    if n == 1:
        return EntropyBracket(1, e1, e1, [(None, 0.0, e1, e1, e1, e1)])
    K = 2 ** (n - 1)
    M = K + 1
    lower = _packing_lower(np.vstack([C, -C]), M, q)
    if family is not None and len(family) and q > 1:
        ins = build_inscription(ob, family)
        mm = len(ins.v)
        if 2 * mm >= M:
            # Id_m = Delta P V J with ||J|| <= 2, ||P|| <= 1: pack +-unit vectors
            e_id = (2.0 ** (1.0 / q) if mm > 1 else 2.0) / 2.0
            lower = max(lower, float(np.min(ins.diagonal)) / 2.0 * e_id)
    upper = e1
    hist = []
    for k in steps:
        if _grid_size(m, k) > grid_cap:
            break
        G = _grid(m, k) / k
        P = G @ C
        h = 1.0 / k
        # largest-remainder rounding: |mu_t - lambda_t| <= h, total <= h (1 + m/2);
        # rounding toward zero: total <= 1
        delta = min(_error_radius(C, h, h * (1.0 + m / 2.0), q), _error_radius(C, h, 1.0, q))
        raw_up = _k_centre_radius(P, K, q) + delta
        raw_lo = _packing_lower(P, M, q)
        lower = max(lower, raw_lo)
        upper = min(upper, raw_up)
        hist.append((h, delta, raw_lo, raw_up, lower, upper))
    if lower > upper * (1 + 1e-12):
        raise OperatorError("entropy bracket inverted; the construction is broken")
    return EntropyBracket(n, lower, upper, hist)


def schuett_shape_check(m: int, n: int, q: float) -> float:
    """``(log(1 + m/n) / n)^{1/q'}``, the shape of ``e_n(Id: l1^m -> lq^m)``."""
    if not (math.log(m) <= n <= m):
        raise OperatorError("need log m <= n <= m")
    inv_qc = 1.0 - 1.0 / q
    return (math.log(1.0 + m / n) / n) ** inv_qc
