"""Weight systems (alpha, sigma, q) on finite trees.

Laws are described by :class:`WeightLaw`; :func:`assign` evaluates a pair of
laws on a tree and normalizes sigma so that ``sigma(root) == 1``.  The factor
removed by the normalization is kept in ``sigma_root_scale`` and reapplied by
everything that produces metric values or operator norms.

Polynomial laws use ``max(1, |t|)`` in place of ``|t|`` so the root gets a
finite value.  This shifts constants only, never rates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .trees import Tree, TreeError


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightLaw:
    kind: str  # constant | polynomial | exponential | per_level | per_node
    gamma: float = 0.0
    scale: float = 1.0
    table: Optional[np.ndarray] = None

    def level_values(self, max_depth: int, q: float) -> Optional[np.ndarray]:
        """Values on levels ``0..max_depth``, or None for per-node laws."""
        n = np.arange(max_depth + 1, dtype=float)
        if self.kind == "constant":
            return np.full(max_depth + 1, float(self.scale))
        if self.kind == "polynomial":
            return self.scale * np.maximum(1.0, n) ** (-self.gamma / q)
        if self.kind == "exponential":
            return self.scale * 2.0 ** (-self.gamma * n / q)
        if self.kind == "per_level":
            tab = np.asarray(self.table, dtype=float)
            if len(tab) < max_depth + 1:
                raise WeightError(
                    f"per-level table has {len(tab)} entries, tree needs {max_depth + 1}"
                )
            return tab[:max_depth + 1].copy()
        if self.kind == "per_node":
            return None
        raise WeightError(f"unknown weight law {self.kind!r}")

    def node_values(self, tree: Tree, q: float) -> np.ndarray:
        if self.kind == "per_node":
            tab = np.asarray(self.table, dtype=float)
            if len(tab) != tree.node_count:
                raise WeightError("per-node table length differs from node count")
            return tab.copy()
        return self.level_values(tree.max_depth, q)[tree.depth]


def constant(c: float = 1.0) -> WeightLaw:
    return WeightLaw("constant", scale=c)


def polynomial(gamma: float, c: float = 1.0) -> WeightLaw:
    """``c * max(1, |t|) ** (-gamma / q)``."""
    return WeightLaw("polynomial", gamma=gamma, scale=c)


def exponential(gamma: float, c: float = 1.0) -> WeightLaw:
    """``c * 2 ** (-gamma * |t| / q)``."""
    return WeightLaw("exponential", gamma=gamma, scale=c)


def per_level(table) -> WeightLaw:
    return WeightLaw("per_level", table=np.asarray(table, dtype=float))


def per_node(table) -> WeightLaw:
    return WeightLaw("per_node", table=np.asarray(table, dtype=float))


@dataclass(frozen=True, eq=False)
class WeightSystem:
    alpha: np.ndarray
    sigma: np.ndarray  # normalized, sigma[0] == 1
    q: float
    sigma_root_scale: float = 1.0
    level_alpha: Optional[np.ndarray] = None
    level_sigma: Optional[np.ndarray] = None  # normalized like ``sigma``

    @property
    def sigma_true(self) -> np.ndarray:
        return self.sigma * self.sigma_root_scale

    @property
    def is_level_dependent(self) -> bool:
        return self.level_alpha is not None and self.level_sigma is not None

    @property
    def is_one_weight(self) -> bool:
        return bool(np.all(self.sigma == 1.0))


def assign(tree: Tree, alpha_law: WeightLaw, sigma_law: WeightLaw, q: float) -> WeightSystem:
    """Evaluate both laws on ``tree`` and validate the standing assumptions.

    ``q`` may equal 1 for metric computations; the operator results need q > 1.
    """
    if not (q >= 1.0 and np.isfinite(q)):
        raise WeightError(f"q must lie in [1, inf), got {q}")
    alpha = alpha_law.node_values(tree, q)
    sigma = sigma_law.node_values(tree, q)
    if np.any(~(alpha > 0)) or np.any(~(sigma > 0)):
        raise WeightError("weights must be strictly positive")
    lev_a = alpha_law.level_values(tree.max_depth, q)
    lev_s = sigma_law.level_values(tree.max_depth, q)
    if lev_s is not None and np.any(np.diff(lev_s) > 0):
        bad = np.nonzero(np.diff(lev_s) > 0)[0]
        raise WeightError(f"sigma increases between levels {bad.tolist()} and the next")
    child = np.arange(1, tree.node_count)
    up = sigma[child] > sigma[tree.parent[child]]
    if np.any(up):
        edges = [(int(tree.parent[c]), int(c)) for c in child[up]]
        raise WeightError(f"sigma must be non-increasing; offending edges (parent, child): {edges[:20]}")
    scale = float(sigma[0])
    return WeightSystem(
        alpha=alpha,
        sigma=sigma / scale,
        q=float(q),
        sigma_root_scale=scale,
        level_alpha=lev_a,
        level_sigma=None if lev_s is None else lev_s / scale,
    )


def load_weight_csv(path, tree: Tree, q: float) -> WeightSystem:
    """Per-node table with header ``node_index,alpha,sigma``."""
    n = tree.node_count
    alpha = np.full(n, np.nan)
    sigma = np.full(n, np.nan)
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            i = int(row["node_index"])
            if not 0 <= i < n:
                raise WeightError(f"node index {i} outside the tree")
            alpha[i] = float(row["alpha"])
            sigma[i] = float(row["sigma"])
    if np.isnan(alpha).any():
        raise WeightError("weight table does not cover every node")
    return assign(tree, per_node(alpha), per_node(sigma), q)


def root_path_sums(tree: Tree, values: np.ndarray) -> np.ndarray:
    """``out[t] = sum of values[r] over r on the root path [0, t]``."""
    out = np.array(values, dtype=float, copy=True)
    for n in range(1, tree.max_depth + 1):
        ids = tree.level(n)
        out[ids] += out[tree.parent[ids]]
    return out


def boundedness_statistic(ws: WeightSystem, tree: Tree) -> float:
    """``sup_s (sum_{r <= s} alpha(r)^q)^(1/q) sigma(s)``."""
    A = root_path_sums(tree, ws.alpha ** ws.q)
    return float(np.max(A ** (1.0 / ws.q) * ws.sigma_true))


def mazja_rosin_statistic(ws: WeightSystem, path_tree: Tree, p: float) -> float:
    """``sup_v ||alpha 1_[0,v]||_q ||sigma 1_[v,end]||_{p'}`` on a truncated path."""
    if path_tree.kind != "path" and np.any(path_tree.child_count > 1):
        raise TreeError("the Maz'ja-Rosin statistic is defined on paths only")
    q = ws.q
    if not 1.0 <= p <= q:
        raise WeightError(f"need 1 <= p <= q, got p={p}, q={q}")
    head = np.cumsum(ws.alpha ** q) ** (1.0 / q)
    s = ws.sigma_true
    if p == 1.0:
        tail = np.maximum.accumulate(s[::-1])[::-1]
    else:
        pc = p / (p - 1.0)
        tail = np.cumsum((s ** pc)[::-1])[::-1] ** (1.0 / pc)
    return float(np.max(head * tail))


def dyadic_round(ws: WeightSystem):
    """Round normalized sigma up to powers of two.

    Returns ``(sigma_hat, m)`` with ``I_m = {t : 2^-(m+1) < sigma(t) <= 2^-m}``
    and ``sigma_hat = 2^-m`` on ``I_m``.  ``np.frexp`` makes the binning exact.
    """
    mant, expo = np.frexp(ws.sigma)
    m = np.where(mant == 0.5, 1 - expo, -expo).astype(np.int64)
    if np.any(m < 0):
        raise WeightError("normalized sigma exceeds 1 somewhere")
    return np.ldexp(1.0, -m), m
