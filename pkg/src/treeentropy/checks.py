"""Cross-module property suite on random small weighted trees.

Each ``check_*`` function takes one instance and returns a dict of findings;
``run_suite`` draws instances and aggregates violation counts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import covering as cov
from . import summation as S
from .metric import MetricEvaluator
from .trees import Tree, random_tree
from .weights import WeightSystem, assign, boundedness_statistic, per_node

REL_TOL = 1e-12


@dataclass(eq=False)
class Instance:
    tree: Tree
    ws: WeightSystem

    @property
    def me(self) -> MetricEvaluator:
        return MetricEvaluator(self.tree, self.ws)


def random_instance(rng: np.random.Generator, max_nodes: int = 60, qs=(1.5, 2.0, 3.0),
                    min_nodes: int = 2) -> Instance:
    """Random recursive tree, alpha uniform on [0.1, 2], sigma shrinking by a random factor per edge."""
    n = int(rng.integers(min_nodes, max_nodes + 1))
    tree = random_tree(n, rng)
    alpha = rng.uniform(0.1, 2.0, n)
    shrink = rng.uniform(0.3, 1.0, n)
    shrink[rng.random(n) < 0.3] = 1.0  # plateaus keep ties in play
    sigma = np.empty(n)
    sigma[0] = rng.uniform(0.5, 3.0)
    for ids in tree.levels[1:]:
        sigma[ids] = sigma[tree.parent[ids]] * shrink[ids]
    q = float(rng.choice(qs))
    return Instance(tree, assign(tree, per_node(alpha), per_node(sigma), q))


def ancestor_matrix(tree: Tree) -> np.ndarray:
    """``M[i, j]`` is true when ``i`` lies on the root path of ``j`` (inclusive)."""
    n = tree.node_count
    M = np.eye(n, dtype=bool)
    for ids in tree.levels[1:]:
        M[:, ids] |= M[:, tree.parent[ids]]
    return M


def check_metric_axioms(inst: Instance) -> dict:
    """Exhaustive triangle inequality, symmetry, definiteness and order monotonicity."""
    me = inst.me
    D = me.distance_matrix()
    n = len(D)
    scale = max(1.0, float(D.max()))
    tri = D[:, None, :] - (D[:, :, None] + D[None, :, :]) > REL_TOL * scale
    out = {
        "triangle": int(tri.sum()),
        "symmetry": int(np.sum(np.abs(D - D.T) > REL_TOL * scale)),
        "definite": int(np.sum(np.diag(D) != 0) + np.sum((D <= 0) & ~np.eye(n, dtype=bool))),
    }
    # t' <= t <= s <= s'  =>  d(t, s) <= d(t', s')
    anc = ancestor_matrix(inst.tree)
    ts, ss = np.nonzero(anc)
    vals = D[ts, ss]
    bad = 0
    for t, s, v in zip(ts, ss, vals):
        outer = anc[ts, t] & anc[s, ss]
        bad += int(np.sum(vals[outer] < v - REL_TOL * scale))
    out["monotone"] = bad
    out["violations"] = sum(out.values())
    return out


def eps_grid_for(me: MetricEvaluator, count: int = 6) -> np.ndarray:
    """Geometric grid between the smallest and largest positive distances."""
    D = me.distance_matrix()
    pos = D[D > 0]
    if pos.size == 0:
        return np.array([1.0])
    return np.geomspace(pos.max() * 1.05, pos.min() * 0.95, count)


def check_order_vs_ball(inst: Instance, count: int = 6) -> dict:
    """``Ntilde(2 eps) <= N(eps)`` with both sides exact."""
    me = inst.me
    rows = []
    for eps in eps_grid_for(me, count):
        N = cov.covering_number(me, float(eps), "ball", "exact").size
        Nt = cov.order_covering_number(me, 2.0 * float(eps))
        rows.append((float(eps), Nt, N))
    return {"violations": sum(Nt > N for _, Nt, N in rows), "rows": rows}


def check_factorization(inst: Instance) -> dict:
    ob = S.OperatorBundle(inst.tree, inst.ws)
    f = S.factorize(ob)
    res = float(f.residual().max())
    zl1 = float(f.z_column_l1().max())
    delta_ok = bool(np.all((f.Delta > 0.5) & (f.Delta <= 1.0)))
    norm_gap = abs(S.operator_norm(ob) - boundedness_statistic(inst.ws, inst.tree))
    v = int(res > REL_TOL) + int(zl1 > 2.0) + int(not delta_ok) + int(norm_gap > REL_TOL * S.operator_norm(ob))
    return {"residual": res, "z_l1_max": zl1, "delta_ok": delta_ok, "violations": v}


def check_dw_cover(inst: Instance, count: int = 4) -> dict:
    """``N(D_W, eps) <= Ntilde(T, dhat, eps) + 1`` where ``dhat`` uses the rounded sigma."""
    ob = S.OperatorBundle(inst.tree, inst.ws)
    f = S.factorize(ob)
    meh = MetricEvaluator(inst.tree, S.hat_weights(f))
    rows = []
    for eps in eps_grid_for(meh, count):
        ndw = S.cover_DW(f, float(eps))
        nt = cov.order_covering_number(meh, float(eps))
        rows.append((float(eps), ndw, nt))
    return {"violations": sum(a > b + 1 for _, a, b in rows), "rows": rows}


def check_inscription_pipeline(inst: Instance, eps: float, n_probes: int = 10_000,
                               rng=None) -> dict:
    """Separated set, then disjoint intervals, then the inscribed identity."""
    me = inst.me
    fam = cov.separated_to_intervals(me, eps)
    out = {"m": len(fam), "family_verified": fam.verified}
    if not fam.verified:
        out["violations"] = 1
        return out
    if len(fam) == 0:
        out["violations"] = 0
        return out
    ob = S.OperatorBundle(inst.tree, inst.ws)
    ins = S.build_inscription(ob, fam)
    r = S.check_inscription(ob, ins, n_probes, rng)
    out.update({k: r[k] for k in ("offdiag_max", "diag_min", "identity_residual", "ok")})
    out["violations"] = int(not r["ok"]) + int(r["offdiag_max"] != 0.0) + int(not r["diag_ok"])
    return out


def check_entropy_e1(inst: Instance) -> dict:
    ob = S.OperatorBundle(inst.tree, inst.ws)
    br = S.entropy_bruteforce(ob, 1)
    q = inst.ws.q
    col = float(np.max(np.sum(np.abs(ob.dense_columns()) ** q, axis=0) ** (1.0 / q)))
    return {"e1": br.lower, "column_max": col,
            "violations": int(br.lower != br.upper or abs(br.upper - col) > REL_TOL * col)}


SUITE = {
    "metric_axioms": (check_metric_axioms, 60),
    "order_vs_ball": (check_order_vs_ball, 60),
    "factorization": (check_factorization, 60),
    "dw_cover": (check_dw_cover, 60),
    "inscription": (None, 40),
    "entropy_e1": (check_entropy_e1, 12),
}


def run_suite(n_instances: int = 50, seed: int = 0, n_probes: int = 1000,
              names=None) -> dict:
    """Run each named check on ``n_instances`` random instances.

    Returns ``{name: {"instances", "violations", "seconds", "ok"}}``.
    """
    names = list(SUITE) if names is None else list(names)
    report = {}
    for k, name in enumerate(names):
        fn, max_nodes = SUITE[name]
        rng = np.random.default_rng([seed, k])
        t0 = time.perf_counter()
        bad = 0
        for _ in range(n_instances):
            inst = random_instance(rng, max_nodes=max_nodes)
            if name == "inscription":
                eps = float(rng.choice(eps_grid_for(inst.me, 6)[1:]))
                r = check_inscription_pipeline(inst, eps, n_probes, rng)
            else:
                r = fn(inst)
            bad += r["violations"]
        report[name] = {"instances": n_instances, "violations": int(bad),
                        "seconds": time.perf_counter() - t0, "ok": bad == 0}
    return report
