"""LMO update rules and the momentum wrappers behind normSGD, signSGD, Lion and Muon."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .errors import DegenerateGradient, InvalidStep
from .geometry import (
    EntrywiseMax,
    Euclidean,
    Geometry,
    LayerwiseMax,
    Spectral,
    lmo,
)
from .params import ParamSet, add_scaled, frobenius_norm

__all__ = [
    "KINDS",
    "OptimizerConfig",
    "OptimizerState",
    "step_lmo",
    "step_lmo_wd",
    "step_normalized_sgd",
    "momentum_update",
    "lion_direction",
    "clip_by_norm",
    "optimizer_step",
]

KINDS = ("normSGD", "signSGD", "Lion", "Muon", "layerwise")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "normSGD"
    beta1: float = 0.0
    beta2: float = 0.0
    weight_decay: float = 0.0
    geometry: Optional[Geometry] = None
    clip: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}; expected one of {KINDS}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.clip is not None and self.clip <= 0:
            raise ValueError("clip must be positive when given")
        if self.kind == "layerwise" and not isinstance(self.geometry, LayerwiseMax):
            raise ValueError("kind='layerwise' needs an explicit LayerwiseMax geometry")

    def resolve_geometry(self, n_layers: int) -> Geometry:
        """Geometry actually used for the LMO.

        Lion is always entrywise. Otherwise an explicit ``geometry`` wins, and
        the defaults are per-layer Euclidean for normSGD, entrywise for
        signSGD and spectral for Muon.
        """
        if self.kind == "Lion":
            return EntrywiseMax()
        if self.geometry is not None:
            return self.geometry
        if self.kind == "normSGD":
            return LayerwiseMax((Euclidean(),) * n_layers)
        if self.kind == "signSGD":
            return EntrywiseMax()
        return Spectral()


@dataclass(frozen=True)
class OptimizerState:
    m: ParamSet
    step_count: int = 0

    @classmethod
    def zeros_like(cls, x: ParamSet) -> "OptimizerState":
        return cls(ParamSet.zeros(x.shapes), 0)


def step_lmo(x: ParamSet, g: ParamSet, eta: float, geom: Geometry) -> ParamSet:
    """``x + eta * lmo(g)``."""
    if eta < 0:
        raise InvalidStep(f"learning rate must be non-negative, got {eta}")
    if eta == 0:
        return x
    return add_scaled(x, lmo(g, geom), eta)


def step_lmo_wd(x: ParamSet, g: ParamSet, eta: float, lam: float, geom: Geometry) -> ParamSet:
    """Decoupled weight decay step ``(1 - lam*eta) x + eta * lmo(g)``.

    Requires ``0 <= lam*eta <= 1`` so the shrink factor stays in [0, 1].
    """
    if eta < 0 or lam < 0:
        raise InvalidStep("eta and lambda must be non-negative")
    if lam * eta > 1.0:
        raise InvalidStep(f"lambda*eta = {lam * eta} exceeds 1")
    if eta == 0:
        return x
    return add_scaled(x * (1.0 - lam * eta), lmo(g, geom), eta)


def step_normalized_sgd(x: ParamSet, g_xi: ParamSet, eta: float) -> ParamSet:
    norm = frobenius_norm(g_xi)
    if norm == 0.0:
        raise DegenerateGradient("zero stochastic gradient")
    if eta == 0:
        return x
    return add_scaled(x, g_xi, -eta / norm)


def momentum_update(m: ParamSet, g: ParamSet, beta: float) -> ParamSet:
    """Exponential moving average ``beta*m + (1-beta)*g``."""
    if beta == 0.0:
        return g
    return add_scaled(m * beta, g, 1.0 - beta)


def lion_direction(m: ParamSet, g: ParamSet, beta1: float) -> ParamSet:
    """``sign(beta1*m + (1-beta1)*g)`` with ``sign(0) = 0``; the step subtracts it."""
    return -lmo(momentum_update(m, g, beta1), EntrywiseMax())


def clip_by_norm(g: ParamSet, max_norm: Optional[float]) -> ParamSet:
    if max_norm is None:
        return g
    norm = frobenius_norm(g)
    if norm <= max_norm:
        return g
    return g * (max_norm / norm)


def optimizer_step(
    cfg: OptimizerConfig,
    state: OptimizerState,
    x: ParamSet,
    g: ParamSet,
    eta: float,
) -> tuple[ParamSet, OptimizerState]:
    """One optimizer update. Returns the new iterate and a fresh state.

    Gradients are optionally clipped, then folded into the momentum buffer.
    Lion takes the sign of a ``beta1`` blend and refreshes ``m`` with
    ``beta2``; the other kinds apply the LMO to the ``beta1`` EMA. A
    degenerate (zero) direction skips the step and leaves the state as is.
    """
    geom = cfg.resolve_geometry(len(x))
    g = clip_by_norm(g, cfg.clip)
    if cfg.kind == "Lion":
        source = momentum_update(state.m, g, cfg.beta1)
        new_m = momentum_update(state.m, g, cfg.beta2)
    else:
        new_m = momentum_update(state.m, g, cfg.beta1)
        source = new_m

    try:
        if cfg.weight_decay > 0:
            x_new = step_lmo_wd(x, source, eta, cfg.weight_decay, geom)
        else:
            x_new = step_lmo(x, source, eta, geom)
    except DegenerateGradient:
        return x, state
    return x_new, replace(state, m=new_m, step_count=state.step_count + 1)
