"""Monte Carlo for the tree-indexed Gaussian field ``X_t = sigma(t) sum_{r <= t} alpha(r) xi_r``.

Each sample owns a Philox stream keyed by the run seed with the sample index
in the high counter word, so results do not depend on batching or on the
number of worker processes.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from .trees import Tree
from .weights import WeightSystem, root_path_sums

MIN_SUCCESSES = 30
BAND = (1e-4, 0.9)


class GaussianError(ValueError):
    pass


@dataclass(eq=False)
class GaussianRun:
    tree: Tree
    ws: WeightSystem
    seed: int
    n_samples: int
    eps_grid: list = field(default_factory=list)
    workers: int = 1
    batch: int = 1024

    def __post_init__(self):
        if self.ws.q != 2.0:
            raise GaussianError("the Gaussian link is defined for q = 2 only")
        if not 0 <= self.seed < 2**64:
            raise GaussianError("seed must be a 64-bit unsigned integer")


def sample_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, index]))


def _field_batch(parent, levels, alpha, sigma, seed, indices):
    n = len(parent)
    xi = np.empty((len(indices), n))
    for row, i in enumerate(indices):
        xi[row] = sample_generator(seed, int(i)).standard_normal(n)
    S = xi * alpha
    for ids in levels[1:]:
        S[:, ids] += S[:, parent[ids]]
    return S * sigma


def _sup_batch(parent, levels, alpha, sigma, seed, lo, hi):
    X = _field_batch(parent, levels, alpha, sigma, seed, range(lo, hi))
    return np.max(np.abs(X), axis=1)


def sample_sup(run: GaussianRun) -> np.ndarray:
    """``sup_t |X_t|`` for samples ``0..n_samples-1``, in index order."""
    tree = run.tree
    args = (tree.parent, tree.levels, run.ws.alpha, run.ws.sigma_true, run.seed)
    chunks = [(lo, min(lo + run.batch, run.n_samples))
              for lo in range(0, run.n_samples, run.batch)]
    if run.workers <= 1:
        parts = [_sup_batch(*args, lo, hi) for lo, hi in chunks]
    else:
        with ProcessPoolExecutor(max_workers=run.workers) as ex:
            futs = [ex.submit(_sup_batch, *args, lo, hi) for lo, hi in chunks]
            parts = [f.result() for f in futs]
    return np.concatenate(parts) if parts else np.empty(0)


def sample_field(run: GaussianRun, indices) -> np.ndarray:
    """Full field values ``X_t`` for the given sample indices (rows)."""
    tree = run.tree
    return _field_batch(tree.parent, tree.levels, run.ws.alpha, run.ws.sigma_true,
                        run.seed, list(indices))


def covariance(ws: WeightSystem, tree: Tree, t: int, s: int) -> float:
    """``E X_t X_s = sigma(t) sigma(s) sum_{r <= t ^ s} alpha(r)^2``."""
    m = tree.meet(t, s)
    A = root_path_sums(tree, ws.alpha ** 2)
    sig = ws.sigma_true
    return float(sig[t] * sig[s] * A[m])


@dataclass
class SmallDevEstimate:
    eps: np.ndarray
    successes: np.ndarray
    n_samples: int
    p_hat: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    minus_log_p: np.ndarray
    flag: list

    @property
    def usable(self) -> np.ndarray:
        return np.array([f == "ok" for f in self.flag])

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "p_hat", "ci_lo", "ci_hi", "minus_log_p", "flag"])
            for row in zip(self.eps, self.p_hat, self.ci_lo, self.ci_hi, self.minus_log_p, self.flag):
                w.writerow([repr(float(v)) for v in row[:5]] + [row[5]])


def estimate_from_sups(sups: np.ndarray, eps_grid) -> SmallDevEstimate:
    eps = np.asarray(eps_grid, dtype=float)
    n = len(sups)
    srt = np.sort(sups)
    k = np.searchsorted(srt, eps, side="left")  # count of sup < eps
    p = k / n
    lo, hi, flags = [], [], []
    for ki, pi in zip(k, p):
        ci = binomtest(int(ki), n).proportion_ci(confidence_level=0.95, method="wilson")
        lo.append(ci.low)
        hi.append(ci.high)
        if ki == 0:
            flags.append("zero")
        elif ki < MIN_SUCCESSES:
            flags.append("few")
        elif not BAND[0] <= pi <= BAND[1]:
            flags.append("band")
        else:
            flags.append("ok")
    with np.errstate(divide="ignore"):
        mlp = -np.log(p)
    order = np.argsort(eps)
    if np.any(np.diff(p[order]) < 0):
        raise GaussianError("estimated probabilities are not monotone in eps")
    return SmallDevEstimate(eps, k, n, p, np.array(lo), np.array(hi), mlp, flags)


def small_deviation(run: GaussianRun, sups: Optional[np.ndarray] = None) -> SmallDevEstimate:
    """Estimate ``P(sup_t |X_t| < eps)`` on the run's grid with Wilson intervals."""
    if sups is None:
        sups = sample_sup(run)
    return estimate_from_sups(sups, run.eps_grid)


def gaussian_cdf_sup_single(eps: float, scale: float = 1.0) -> float:
    """``P(|scale * xi| < eps)`` for one standard normal."""
    return math.erf(eps / (scale * math.sqrt(2.0)))
