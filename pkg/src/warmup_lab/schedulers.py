"""Learning-rate schedules driven by the suboptimality gap ``delta = loss - f_star``.

Two families live here:

* theoretical schedules ``delta / (D * K(delta))`` and relatives, where
  ``K(delta) = K0 + K1*delta + Krho*delta**rho`` bounds the local smoothness;
* the practical rational schedule ``delta / (K0 + K1*delta + K2*delta**2)``
  whose coefficients are pinned by a peak value ``lr`` at ``delta_prime``, a
  floor ``lr/div`` at the initial gap, and a weighted least-squares match of
  ``delta_prime`` to a linear-warmup/cosine-decay target.

``AdaptiveWarmupScheduler`` runs the practical schedule while the gap is above
``delta_prime`` and then hands over, permanently, to a classical decay.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidCoefficients, SchedulerInitError

__all__ = [
    "CoefficientSet",
    "TheoreticalParams",
    "eta_practical",
    "solve_coefficients",
    "target_schedule",
    "matching_objective",
    "candidate_grid",
    "select_delta_prime",
    "eta_thm1",
    "eta_thm2",
    "eta_thm3",
    "transition_point",
    "lambda_max",
    "lambda_admissible",
    "cosine_decay",
    "linear_decay",
    "linear_warmup",
    "convert_smoothness_constants",
    "DecaySchedule",
    "AdaptiveWarmupScheduler",
    "ManualWarmupScheduler",
    "ConstantScheduler",
    "TheoreticalScheduler",
    "QUADRATURE_POINTS",
    "DEFAULT_SIGMA_F2",
]

QUADRATURE_POINTS = 2048
DEFAULT_SIGMA_F2 = 1e3


# --------------------------------------------------------------------------
# practical rational schedule


@dataclass(frozen=True)
class CoefficientSet:
    K0: float
    K1: float
    K2: float
    delta_prime: float
    delta0: float
    lr: float
    div: float

    def denominator(self, delta):
        return self.K0 + self.K1 * delta + self.K2 * delta * delta

    def __call__(self, delta: float) -> float:
        return eta_practical(delta, self)


def _k2(lr, div, delta0, dp):
    return delta0 * (div - 1.0) / (lr * (delta0 - dp) ** 2)


def _k0(lr, div, delta0, dp):
    return delta0 * dp * dp * (div - 1.0) / (lr * (delta0 - dp) ** 2)


def _k1(lr, div, delta0, dp):
    return (delta0 * delta0 - 2.0 * delta0 * dp * div + dp * dp) / (lr * (delta0 - dp) ** 2)


def _denominator_positive(K0: float, K1: float, K2: float, delta0: float) -> bool:
    """Whether ``K0 + K1 d + K2 d^2 > 0`` for every ``d`` in ``(0, delta0]``."""
    if K0 < 0:
        return False
    if K0 == 0 and (K1 < 0 or (K1 == 0 and K2 <= 0)):
        return False
    if K0 + K1 * delta0 + K2 * delta0 * delta0 <= 0:
        return False
    if K2 > 0:
        v = -K1 / (2.0 * K2)
        if 0 < v < delta0 and K0 + K1 * v + K2 * v * v <= 0:
            return False
    return True


def solve_coefficients(lr: float, div: float, delta0: float, delta_prime: float) -> CoefficientSet:
    """Closed-form ``(K0, K1, K2)`` putting the peak ``lr`` at ``delta_prime``
    and the value ``lr/div`` at ``delta0``.

    Raises InvalidCoefficients when the inputs leave the valid domain or the
    resulting denominator is not positive on ``(0, delta0]``.
    """
    if not (lr > 0 and div >= 1 and delta0 > 0):
        raise InvalidCoefficients(f"need lr > 0, div >= 1, delta0 > 0 (got {lr}, {div}, {delta0})")
    if not 0 < delta_prime < delta0:
        raise InvalidCoefficients(f"delta_prime={delta_prime} must lie in (0, {delta0})")
    K2 = _k2(lr, div, delta0, delta_prime)
    K0 = _k0(lr, div, delta0, delta_prime)
    K1 = _k1(lr, div, delta0, delta_prime)
    if not _denominator_positive(K0, K1, K2, delta0):
        raise InvalidCoefficients("schedule denominator is not positive on (0, delta0]")
    return CoefficientSet(K0, K1, K2, float(delta_prime), float(delta0), float(lr), float(div))


def eta_practical(delta, c: CoefficientSet):
    """``delta / (K0 + K1 delta + K2 delta^2)``; accepts scalars or arrays.

    Non-positive gaps map to the ``delta -> 0`` limit: 0, or ``1/K1`` when
    ``K0 == 0`` (the constant ``div == 1`` schedule).
    """
    d = np.asarray(delta, dtype=np.float64)
    den = c.denominator(d)
    pos = d > 0
    if np.any(pos & (den <= 0)):
        raise InvalidCoefficients("non-positive schedule denominator")
    at_zero = 1.0 / c.K1 if c.K0 == 0 and c.K1 > 0 else 0.0
    out = np.where(pos, d / np.where(pos, den, 1.0), at_zero)
    return float(out) if out.ndim == 0 else out


def target_schedule(delta, lr: float, div: float, delta0: float, delta_prime: float):
    """Linear ramp from ``lr/div`` at ``delta0`` to ``lr`` at ``delta_prime``,
    then half-cosine from ``lr`` down to 0 at ``delta = 0``."""
    d = np.asarray(delta, dtype=np.float64)
    floor = lr / div
    ramp = floor + (lr - floor) * (delta0 - d) / (delta0 - delta_prime)
    cos = 0.5 * lr * (1.0 - np.cos(np.pi * d / delta_prime))
    out = np.where(d >= delta_prime, ramp, cos)
    return float(out) if out.ndim == 0 else out


def matching_objective(
    delta_prime: float,
    lr: float,
    div: float,
    delta0: float,
    kappa: float,
    sigma_F2: float = DEFAULT_SIGMA_F2,
    n_points: int = QUADRATURE_POINTS,
) -> float:
    """Gaussian-weighted squared mismatch between the rational schedule and the
    warmup/cosine target, centred on ``delta_prime``.

    The weight is ``exp(-(delta - delta_prime)^2 * kappa / sigma_F2)``; the
    integral over ``[0, delta0]`` uses the trapezoid rule on ``n_points``
    uniform nodes. Candidates without valid coefficients score ``inf``.
    """
    try:
        c = solve_coefficients(lr, div, delta0, delta_prime)
    except InvalidCoefficients:
        return math.inf
    grid = np.linspace(0.0, delta0, n_points)
    weight = np.exp(-((grid - delta_prime) ** 2) * kappa / sigma_F2)
    diff = eta_practical(grid, c) - target_schedule(grid, lr, div, delta0, delta_prime)
    return float(np.trapezoid(weight * diff * diff, grid))


def candidate_grid(delta0: float, n_candidates: int = 1000) -> np.ndarray:
    """Midpoints ``(k + 1/2) * delta0 / n`` for ``k = 0 .. n-1``."""
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    return (np.arange(n_candidates) + 0.5) * (delta0 / n_candidates)


def select_delta_prime(
    lr: float,
    div: float,
    delta0: float,
    kappa: float,
    sigma_F2: float = DEFAULT_SIGMA_F2,
    n_candidates: int = 1000,
) -> float:
    """Grid argmin of ``matching_objective``; ties go to the smaller candidate."""
    grid = candidate_grid(delta0, n_candidates)
    scores = np.array([matching_objective(dp, lr, div, delta0, kappa, sigma_F2) for dp in grid])
    if not np.isfinite(scores).any():
        raise SchedulerInitError("no candidate delta_prime yields valid coefficients")
    return float(grid[int(np.argmin(scores))])


# --------------------------------------------------------------------------
# theoretical schedules


@dataclass(frozen=True)
class TheoreticalParams:
    rho: float
    K0: float = 0.0
    K1: float = 0.0
    Krho: float = 0.0
    D: Optional[float] = None
    lam: Optional[float] = None

    def __post_init__(self):
        if self.rho <= 0:
            raise InvalidCoefficients("rho must be positive")
        if min(self.K0, self.K1, self.Krho) < 0:
            raise InvalidCoefficients("smoothness constants must be non-negative")

    def smoothness(self, delta: float) -> float:
        """``K0 + K1*delta + Krho*delta**rho``."""
        return self.K0 + self.K1 * delta + self.Krho * delta**self.rho

    def _check(self):
        if self.K0 == 0 and self.K1 == 0 and self.Krho == 0:
            raise InvalidCoefficients("at least one smoothness constant must be positive")


def eta_thm1(delta: float, p: TheoreticalParams) -> float:
    """``delta / (D * K(delta))``."""
    p._check()
    if p.D is None or p.D <= 0:
        raise InvalidCoefficients("gap schedule needs D > 0")
    if delta <= 0:
        return 0.0
    return delta / (p.D * p.smoothness(delta))


def eta_thm3(delta_xi: float, D: float, p: TheoreticalParams) -> float:
    """Same form as ``eta_thm1`` on the per-batch gap, with ``D = ||x0 - x*||``."""
    return eta_thm1(delta_xi, TheoreticalParams(p.rho, p.K0, p.K1, p.Krho, D=D))


def eta_thm2(delta: float, p: TheoreticalParams) -> float:
    """``lam * delta / (8 K(delta))`` for the weight-decay update."""
    p._check()
    if p.lam is None or p.lam <= 0:
        raise InvalidCoefficients("weight-decay schedule needs lam > 0")
    if p.rho <= 1:
        raise InvalidCoefficients("weight-decay schedule needs rho > 1")
    if delta <= 0:
        return 0.0
    return p.lam * delta / (8.0 * p.smoothness(delta))


def transition_point(K0: float, Krho: float, rho: float) -> float:
    """Gap at which ``delta / K(delta)`` peaks: ``(K0 / (Krho (rho-1)))**(1/rho)``.

    With ``Krho = 0`` the schedule only shrinks as the gap closes, so there is
    no warm-up phase; ``inf`` is returned.
    """
    if rho <= 1:
        raise ValueError("a transition point exists only for rho > 1")
    if Krho == 0:
        return math.inf
    return (K0 / (Krho * (rho - 1.0))) ** (1.0 / rho)


def lambda_max(p: TheoreticalParams) -> float:
    if p.rho <= 1:
        raise InvalidCoefficients("lambda_max needs rho > 1")
    if p.Krho <= 0 and p.K1 <= 0:
        raise InvalidCoefficients("lambda_max needs Krho > 0 or K1 > 0")
    r = p.rho
    inner = r * (p.K0 / (r - 1.0)) ** ((r - 1.0) / r) * p.Krho ** (1.0 / r) + p.K1
    return math.sqrt(8.0 * inner)


def lambda_admissible(lam: float, p: TheoreticalParams, x0_norm: float, xstar_norm: float) -> bool:
    """``0 < lam <= 1 / max(||x0||, ||x*||, 1/lambda_max)``."""
    if lam <= 0:
        return False
    return lam <= 1.0 / max(x0_norm, xstar_norm, 1.0 / lambda_max(p))


def convert_smoothness_constants(rho: float, L0: float, Lrho: float) -> TheoreticalParams:
    """Map ``(rho, L0, Lrho)`` gradient-norm smoothness to gap-based constants.

    The new exponent is ``rho / (2 - rho)`` with ``K0 = 2 L0``, ``K1 = 0`` and
    ``Krho = Lrho * (4 Lrho)**(rho / (2 - rho))``.
    """
    if not 0 < rho < 2:
        raise ValueError("conversion holds only for 0 < rho < 2")
    new_rho = rho / (2.0 - rho)
    return TheoreticalParams(new_rho, K0=2.0 * L0, K1=0.0, Krho=Lrho * (4.0 * Lrho) ** new_rho)


# --------------------------------------------------------------------------
# step-indexed building blocks


def cosine_decay(step: int, T_decay: int, lr_start: float) -> float:
    if T_decay <= 0:
        return 0.0
    step = min(max(step, 0), T_decay)
    return 0.5 * lr_start * (1.0 + math.cos(math.pi * step / T_decay))


def linear_decay(step: int, T_decay: int, lr_start: float) -> float:
    if T_decay <= 0:
        return 0.0
    step = min(max(step, 0), T_decay)
    return lr_start * (1.0 - step / T_decay)


def linear_warmup(step: int, warmup_steps: int, lr: float, div: float) -> float:
    if warmup_steps <= 0 or step >= warmup_steps:
        return lr
    floor = lr / div
    return floor + (lr - floor) * step / warmup_steps


_DECAYS = {"cosine": cosine_decay, "linear": linear_decay}


class DecaySchedule:
    """Step-counting decay from ``lr_start`` to 0 over ``T_decay`` calls."""

    def __init__(self, kind: str, T_decay: int, lr_start: float):
        if kind not in _DECAYS:
            raise ValueError(f"unknown decay {kind!r}")
        self.kind = kind
        self.T_decay = int(T_decay)
        self.lr_start = float(lr_start)
        self.index = 0

    def get_lr(self) -> float:
        lr = _DECAYS[self.kind](self.index, self.T_decay, self.lr_start)
        self.index += 1
        return lr


# --------------------------------------------------------------------------
# stateful schedulers: get_lr(loss) once per optimizer step


class AdaptiveWarmupScheduler:
    """Warm-up along the rational schedule, then a classical decay.

    On the first call the initial gap fixes ``delta0``; ``delta_prime`` is
    chosen by ``select_delta_prime`` unless given explicitly. While the gap
    stays at or above ``delta_prime`` the rational schedule is returned and
    ``warmup_steps`` counts up. The first gap below ``delta_prime`` starts a
    decay over the remaining ``total_steps - warmup_steps`` steps from
    ``lr``, and the scheduler never returns to warm-up afterwards.

    Gaps below zero (loss under ``f_star``) are clamped to 0.
    ``smooth_beta`` optionally feeds an EMA of the loss instead of the raw one.
    """

    phase_names = ("warmup", "decay")

    def __init__(
        self,
        total_steps: int,
        f_star: float,
        lr: float,
        div: float = 100.0,
        kappa: float = 1.0,
        sigma_F2: float = DEFAULT_SIGMA_F2,
        decay: str = "cosine",
        n_candidates: int = 1000,
        delta_prime: Optional[float] = None,
        smooth_beta: Optional[float] = None,
    ):
        if decay not in _DECAYS:
            raise ValueError(f"unknown decay {decay!r}")
        if sigma_F2 <= 0:
            raise ValueError("sigma_F2 must be positive")
        self.total_steps = int(total_steps)
        self.f_star = float(f_star)
        self.lr = float(lr)
        self.div = float(div)
        self.kappa = float(kappa)
        self.sigma_F2 = float(sigma_F2)
        self.decay_kind = decay
        self.n_candidates = n_candidates
        self._fixed_delta_prime = delta_prime
        self.smooth_beta = smooth_beta

        self.is_init = False
        self.is_decay = False
        self.warmup_steps = 0
        self.coeffs: Optional[CoefficientSet] = None
        self.decay: Optional[DecaySchedule] = None
        self.phase: Optional[str] = None
        self._ema: Optional[float] = None

    @property
    def delta_prime(self) -> Optional[float]:
        return None if self.coeffs is None else self.coeffs.delta_prime

    def _initialize(self, delta: float) -> None:
        if not delta > 0:
            raise SchedulerInitError(
                f"initial gap {delta} is not positive; f_star must lie below the first loss"
            )
        if self._fixed_delta_prime is not None:
            dp = float(self._fixed_delta_prime)
        else:
            dp = select_delta_prime(
                self.lr, self.div, delta, self.kappa, self.sigma_F2, self.n_candidates
            )
        try:
            self.coeffs = solve_coefficients(self.lr, self.div, delta, dp)
        except Exception as exc:
            raise SchedulerInitError(str(exc)) from exc
        self.is_init = True

    def get_lr(self, loss: float) -> float:
        if self.smooth_beta is not None:
            b = self.smooth_beta
            self._ema = loss if self._ema is None else b * self._ema + (1.0 - b) * loss
            loss = self._ema
        delta = max(loss - self.f_star, 0.0)
        if not self.is_init:
            self._initialize(loss - self.f_star)
        if delta >= self.coeffs.delta_prime and not self.is_decay:
            self.warmup_steps += 1
            self.phase = "warmup"
            return eta_practical(delta, self.coeffs)
        if not self.is_decay:
            self.is_decay = True
            self.decay = DecaySchedule(
                self.decay_kind, self.total_steps - self.warmup_steps, self.lr
            )
        self.phase = "decay"
        return self.decay.get_lr()

    def header(self) -> dict:
        c = self.coeffs
        return {
            "kappa": self.kappa,
            "sigma_F2": self.sigma_F2,
            "delta_prime": None if c is None else c.delta_prime,
            "delta0": None if c is None else c.delta0,
            "K0": None if c is None else c.K0,
            "K1": None if c is None else c.K1,
            "K2": None if c is None else c.K2,
            "warmup_steps": self.warmup_steps,
        }


class ManualWarmupScheduler:
    """Linear warm-up from ``lr/div`` over a fixed number of steps, then decay."""

    def __init__(self, total_steps: int, warmup_steps: int, lr: float, div: float = 100.0,
                 decay: str = "cosine"):
        if warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        self.total_steps = int(total_steps)
        self.target_warmup = int(warmup_steps)
        self.lr = float(lr)
        self.div = float(div)
        self.decay = DecaySchedule(decay, max(self.total_steps - self.target_warmup, 0), self.lr)
        self.step = 0
        self.warmup_steps = 0
        self.phase: Optional[str] = None

    def get_lr(self, loss: float = math.nan) -> float:
        t = self.step
        self.step += 1
        if t < self.target_warmup:
            self.warmup_steps += 1
            self.phase = "warmup"
            return linear_warmup(t, self.target_warmup, self.lr, self.div)
        self.phase = "decay"
        return self.decay.get_lr()

    def header(self) -> dict:
        return {"warmup_steps": self.warmup_steps}


class ConstantScheduler:
    def __init__(self, lr: float):
        self.lr = float(lr)
        self.warmup_steps = 0
        self.phase = "decay"

    def get_lr(self, loss: float = math.nan) -> float:
        return self.lr

    def header(self) -> dict:
        return {"warmup_steps": 0}


class TheoreticalScheduler:
    """Gap-driven schedules from the convergence analysis.

    ``kind`` is one of ``thm1``, ``thm1_frozen``, ``thm2``, ``thm3``. The
    frozen variant replaces ``K(delta)`` by its value at the first call,
    giving the decay-only baseline ``delta / (D * K(delta0))``. For ``thm3``
    the caller passes the per-batch loss and ``f_star`` is the per-batch
    infimum.
    """

    KINDS = ("thm1", "thm1_frozen", "thm2", "thm3")

    def __init__(self, kind: str, params: TheoreticalParams, f_star: float = 0.0):
        if kind not in self.KINDS:
            raise ValueError(f"unknown theoretical schedule {kind!r}")
        self.kind = kind
        self.params = params
        self.f_star = float(f_star)
        self.K_initial: Optional[float] = None
        self.warmup_steps = 0
        self.phase: Optional[str] = None
        if params.rho > 1:
            self.delta_transition = transition_point(params.K0, params.Krho, params.rho)
        else:
            self.delta_transition = math.inf

    def get_lr(self, loss: float) -> float:
        delta = max(loss - self.f_star, 0.0)
        p = self.params
        if self.K_initial is None:
            self.K_initial = p.smoothness(delta)
        if delta >= self.delta_transition:
            self.warmup_steps += 1
            self.phase = "warmup"
        else:
            self.phase = "decay"
        if self.kind == "thm2":
            return eta_thm2(delta, p)
        if self.kind == "thm1_frozen":
            p._check()
            return delta / (p.D * self.K_initial) if delta > 0 else 0.0
        return eta_thm1(delta, p)

    def header(self) -> dict:
        return {"warmup_steps": self.warmup_steps, "delta_transition": self.delta_transition}
