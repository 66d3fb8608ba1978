"""Predicted rates for covering and entropy numbers, and log-log rate fitting.

Entropy rates are written as ``n^{-r} (log n)^s`` and stored as ``(r, s)``.
With ``p = min(2, q)``, upper bounds carry ``1/p'`` and lower bounds ``1/q'``;
for ``q > 2`` the two differ and the prediction is flagged as a gap.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

FAMILIES = ("moderate", "biased", "binary-poly", "binary-exp", "path")
_TOL = 1e-12


class RateError(ValueError):
    pass


class InsufficientData(RateError):
    pass


@dataclass
class RatePrediction:
    family: str
    source: str
    regime: str
    model: str = "power"  # power: N ~ eps^-a |log eps|^b ; stretched: log N ~ eps^-a
    covering: Optional[tuple] = None  # (a, b)
    entropy_upper: Optional[tuple] = None  # (r, s)
    entropy_lower: Optional[tuple] = None
    critical: bool = False
    gap: bool = False
    neighbours: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def conjugate(x: float) -> float:
    """``1/x' = 1 - 1/x``."""
    return 1.0 - 1.0 / x


def _power_entropy(a: float, b: float, inv: float) -> tuple:
    return (1.0 / a + inv, b / a)


def _stretched_upper(A: float, inv_pc: float):
    pc = 1.0 / inv_pc
    if abs(A - pc) < _TOL:
        return None
    if A < pc:
        return (inv_pc, inv_pc - 1.0 / A)
    return (1.0 / A, 0.0)


def _stretched_lower(A: float, inv_qc: float) -> tuple:
    qc = 1.0 / inv_qc
    if A < qc:
        return (inv_qc, inv_qc - 1.0 / A)
    return (1.0 / A, 0.0)


def _side(a: tuple, inv_pc: float, inv_qc: float) -> dict:
    return {"covering": a, "entropy_upper": _power_entropy(*a, inv_pc),
            "entropy_lower": _power_entropy(*a, inv_qc)}


def predict(params: dict) -> RatePrediction:
    """Covering and entropy exponents for one parameter set.

    ``params``: ``family`` (one of FAMILIES), ``q``, ``gamma`` and for
    moderate/biased trees ``lam``.
    """
    family = params.get("family")
    if family not in FAMILIES:
        raise RateError(f"unsupported family {family!r}; choose from {FAMILIES}")
    q = float(params["q"])
    gamma = float(params["gamma"])
    lam = float(params.get("lam", 0.0))
    if not q > 1:
        raise RateError("entropy predictions need q > 1")
    if family == "binary-exp":
        if gamma <= 0:
            raise RateError("exponential weights need gamma > 0")
    elif gamma <= 1:
        raise RateError("polynomial weights need gamma > 1")
    inv_pc = conjugate(min(2.0, q))
    inv_qc = conjugate(q)
    gap = q > 2

    if family == "path":
        family, lam = "moderate", 0.0
        src_family = "path"
    else:
        src_family = family

    if family == "moderate":
        conv = (q * (lam + 1) / gamma, 0.0)
        div = (q * lam / (gamma - 1), 0.0) if lam > 0 else None
        if abs(gamma - (lam + 1)) < _TOL:
            nb = {"gamma>lam+1": _side(conv, inv_pc, inv_qc)}
            if div:
                nb["gamma<lam+1"] = _side(div, inv_pc, inv_qc)
            return RatePrediction(src_family, "moderate trees, polynomial weights", "critical",
                                  critical=True, gap=gap, neighbours=nb)
        if gamma > lam + 1:
            a, regime = conv, "convergent"
        else:
            a, regime = div, "divergent"
        return RatePrediction(src_family, "moderate trees, polynomial weights", regime,
                              covering=a, entropy_upper=_power_entropy(*a, inv_pc),
                              entropy_lower=_power_entropy(*a, inv_qc), gap=gap)

    if family == "biased":
        a = (q * (lam + 1) / gamma, 0.0)
        return RatePrediction("biased", "biased trees, one weight", "biased",
                              covering=a, entropy_upper=_power_entropy(*a, inv_pc),
                              entropy_lower=_power_entropy(*a, inv_qc), gap=gap)

    if family == "binary-exp":
        a = (q / gamma, 0.0)
        return RatePrediction("binary-exp", "binary trees, exponential weights", "exponential",
                              covering=a, entropy_upper=_power_entropy(*a, inv_pc),
                              entropy_lower=_power_entropy(*a, inv_qc), gap=gap)

    # binary tree, polynomial weights: log N ~ eps^{-q/(gamma-1)}
    A = q / (gamma - 1.0)
    up = _stretched_upper(A, inv_pc)
    lo = _stretched_lower(A, inv_qc)
    if up is None:
        # the two one-sided formulas evaluated at the boundary
        below = {"entropy_upper": (inv_pc, inv_pc - 1.0 / A), "entropy_lower": lo}
        above = {"entropy_upper": (1.0 / A, 0.0), "entropy_lower": lo}
        return RatePrediction("binary-poly", "binary trees, polynomial weights", "critical",
                              model="stretched", covering=(A, 0.0), critical=True, gap=gap,
                              neighbours={"a<p'": below, "a>p'": above})
    regime = "a<p'" if A < 1.0 / inv_pc else "a>p'"
    return RatePrediction("binary-poly", "binary trees, polynomial weights", regime,
                          model="stretched", covering=(A, 0.0), entropy_upper=up,
                          entropy_lower=lo, gap=gap)


# --------------------------------------------------------------------------
# fitting


@dataclass
class RateFit:
    model: str
    a: float
    b: float
    c0: float
    r_squared: float
    residuals: list
    n_points: int
    decades: float
    eps: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _series(data, quantity: str):
    """Extract ``(eps, values, usable)`` from profiles, estimates or raw pairs."""
    from .covering import CoveringProfile
    from .gaussian import SmallDevEstimate

    if isinstance(data, CoveringProfile):
        eps = np.array([r["epsilon"] for r in data.records])
        if quantity == "Ntilde":
            vals = np.array([r["Ntilde"] for r in data.records], dtype=float)
            ok = np.ones(len(vals), dtype=bool)
        else:
            lo = np.array([r["N_lower"] for r in data.records], dtype=float)
            hi = np.array([r["N_upper"] for r in data.records], dtype=float)
            exact = np.array([r["N_exact"] is not None for r in data.records])
            ok = exact | (hi <= 1.1 * lo)
            vals = np.sqrt(lo * hi)
        return eps, vals, ok
    if isinstance(data, SmallDevEstimate):
        return data.eps, data.minus_log_p, data.usable
    eps, vals = data
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(vals, dtype=float)
    return eps, vals, np.isfinite(vals) & (vals > 0)


def fit_rate(data, model: str = "power", with_log: bool = False, quantity: str = "Ntilde",
             values_are_log: bool = False, min_points: int = 6,
             min_decades: float = 2.0) -> RateFit:
    """Least-squares fit in log coordinates.

    power: ``log V = a log(1/eps) + b log log(1/eps) + c0`` (``b = 0`` unless
    ``with_log``).  stretched: ``log log N = a log(1/eps) + c0``; pass
    ``values_are_log=True`` when the values already are ``log N``.
    """
    eps, vals, ok = _series(data, quantity)
    if model == "stretched":
        logv = vals if values_are_log else np.log(np.where(vals > 0, vals, np.nan))
        ok = ok & np.isfinite(logv) & (logv > 0)
        fitted = logv
    elif model == "power":
        if values_are_log:
            raise RateError("power model takes raw values")
        ok = ok & (vals > 0)
        fitted = vals
    else:
        raise RateError(f"unknown model {model!r}")
    if with_log:
        ok = ok & (eps < 1.0 / math.e)
    e, f = eps[ok], fitted[ok]
    decades = float(np.log10(f.max() / f.min())) if len(f) else 0.0
    if len(e) < min_points or decades < min_decades:
        raise InsufficientData(
            f"{len(e)} usable points spanning {decades:.2f} decades; need at least "
            f"{min_points} points and {min_decades} decades (grid had {len(eps)} points)"
        )
    x = np.log(1.0 / e)
    y = np.log(f)
    cols = [x]
    if with_log and model == "power":
        cols.append(np.log(x))
    cols.append(np.ones_like(x))
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    pred = X @ coef
    res = y - pred
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss_tot if ss_tot > 0 else 1.0
    a = float(coef[0])
    b = float(coef[1]) if len(coef) == 3 else 0.0
    return RateFit(model, a, b, float(coef[-1]), r2, res.tolist(), len(e), decades,
                   e.tolist(), f.tolist())


def relative_error(measured: float, target: float) -> float:
    return abs(measured - target) / abs(target)
