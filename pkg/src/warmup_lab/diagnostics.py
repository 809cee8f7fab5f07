"""Empirical smoothness measurement, curve fitting and sanity checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateInput, FitError
from .geometry import Geometry, dual_norm, primal_norm
from .params import ParamSet
from .problems import Objective
from .schedulers import CoefficientSet, eta_practical

__all__ = [
    "SmoothnessSample",
    "smoothness_ratio",
    "fit_quadratic",
    "fit_summary",
    "ConstraintReport",
    "verify_constraints",
    "grad_check",
    "finite_difference_grad",
]


@dataclass(frozen=True)
class SmoothnessSample:
    delta: float
    ratio: float


def smoothness_ratio(obj: Objective, x_t: ParamSet, x_t1: ParamSet, geom: Geometry) -> float:
    """``||grad f(x_t1) - grad f(x_t)||_* / ||x_t1 - x_t||``.

    For a stochastic run, pass the batch objective so both gradients see the
    same batch.
    """
    step = x_t1 - x_t
    denom = primal_norm(step, geom)
    if denom == 0.0:
        raise DegenerateInput("smoothness ratio needs two distinct points")
    return dual_norm(obj.grad(x_t1) - obj.grad(x_t), geom) / denom


def _design(samples: Sequence[SmoothnessSample]):
    d = np.array([s.delta for s in samples], dtype=np.float64)
    r = np.array([s.ratio for s in samples], dtype=np.float64)
    if np.unique(d).size < 3:
        raise FitError("need at least 3 distinct deltas to fit K0 + K1 d + K2 d^2")
    return np.stack([np.ones_like(d), d, d * d], axis=1), r


def fit_quadratic(samples: Sequence[SmoothnessSample], max_cond: float = 1e12,
                  relative: bool = False) -> tuple[float, float, float]:
    """Least-squares ``(K0, K1, K2)`` for ``ratio ~ K0 + K1 delta + K2 delta^2``.

    Solved through column-scaled normal equations; raises FitError when the
    scaled Gram matrix has condition number above ``max_cond``. With
    ``relative=True`` each row is divided by its observed ratio, so the fit
    minimizes relative rather than absolute residuals (the right weighting
    when the noise is multiplicative).
    """
    A, r = _design(samples)
    if relative:
        if np.any(r <= 0):
            raise FitError("relative weighting needs strictly positive ratios")
        A, r = A / r[:, None], np.ones_like(r)
    scale = np.linalg.norm(A, axis=0)
    As = A / scale
    gram = As.T @ As
    if np.linalg.cond(gram) > max_cond:
        raise FitError("design matrix is numerically rank deficient")
    coef = np.linalg.solve(gram, As.T @ r) / scale
    return float(coef[0]), float(coef[1]), float(coef[2])


def fit_summary(samples: Sequence[SmoothnessSample]) -> dict:
    K0, K1, K2 = fit_quadratic(samples)
    A, r = _design(samples)
    resid = A @ np.array([K0, K1, K2]) - r
    d = A[:, 1]
    return {
        "K0": K0,
        "K1": K1,
        "K2": K2,
        "n_samples": len(samples),
        "rms_residual": float(np.sqrt(np.mean(resid * resid))),
        "delta_min": float(d.min()),
        "delta_max": float(d.max()),
    }


@dataclass
class ConstraintReport:
    peak_residual: float
    floor_residual: float
    critical_residual: float
    denominator_positive: bool
    tolerance: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_constraints(c: CoefficientSet, tol: float = 1e-9, scan_points: int = 4096) -> ConstraintReport:
    """Re-evaluate the three defining constraints of a coefficient set.

    * peak: ``eta(delta_prime) == lr``
    * floor: ``eta(delta0) == lr / div``
    * critical point: ``K0 == K2 * delta_prime^2`` (zero derivative at the peak)

    plus a positivity scan of the denominator on ``scan_points`` nodes in
    ``(0, delta0]``.
    """
    grid = np.linspace(c.delta0 / scan_points, c.delta0, scan_points)
    positive = bool(np.all(c.denominator(grid) > 0))
    failures = []
    if not positive:
        failures.append("denominator")
        return ConstraintReport(np.inf, np.inf, np.inf, False, tol, failures)

    peak = abs(eta_practical(c.delta_prime, c) - c.lr) / c.lr
    floor = abs(eta_practical(c.delta0, c) - c.lr / c.div) * c.div / c.lr
    k2d2 = c.K2 * c.delta_prime**2
    scale = max(abs(c.K0), abs(k2d2))
    crit = abs(c.K0 - k2d2) / scale if scale > 0 else 0.0
    for name, val in (("peak", peak), ("floor", floor), ("critical", crit)):
        if not val <= tol:
            failures.append(name)
    return ConstraintReport(peak, floor, crit, positive, tol, failures)


def finite_difference_grad(obj: Objective, x: ParamSet, rel_step: float = 1e-5) -> ParamSet:
    flat = x.flat()
    shapes = x.shapes
    out = np.empty_like(flat)
    for i in range(flat.size):
        h = rel_step * (1.0 + abs(flat[i]))
        up, down = flat.copy(), flat.copy()
        up[i] += h
        down[i] -= h
        out[i] = (obj.value(ParamSet.from_flat(up, shapes))
                  - obj.value(ParamSet.from_flat(down, shapes))) / (2.0 * h)
    return ParamSet.from_flat(out, shapes)


def grad_check(obj: Objective, x: ParamSet) -> float:
    """Max entrywise gap between analytic and central-difference gradients,
    relative to the largest gradient entry."""
    analytic = obj.grad(x).flat()
    numeric = finite_difference_grad(obj, x).flat()
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-300)
    return float(np.abs(analytic - numeric).max() / scale)
