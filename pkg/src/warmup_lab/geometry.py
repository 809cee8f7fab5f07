"""Norm geometries on parameter space and their linear minimization oracles.

Four geometries are supported:

* ``Euclidean``   -- global l2/Frobenius norm over all layers (normSGD).
* ``EntrywiseMax`` -- l-infinity over all entries, dual l1 (signSGD / Lion).
* ``Spectral``    -- per-layer operator norm, combined by max over layers,
  dual nuclear norm summed over layers (Muon).
* ``LayerwiseMax`` -- max over layers of a per-layer choice among the three
  above, dual is the sum of per-layer duals.

The entrywise and spectral norms already decompose as a max over layers, so on
multi-layer inputs they coincide with ``LayerwiseMax`` of a single kind. The
Euclidean norm does not: a bare ``Euclidean`` normalizes all layers jointly,
whereas ``LayerwiseMax([Euclidean] * L)`` normalizes each layer separately.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateGradient, ShapeMismatch
from .params import ParamSet, ShapeSpec, frobenius_norm, jacobi_svd

__all__ = [
    "Euclidean",
    "EntrywiseMax",
    "Spectral",
    "LayerwiseMax",
    "Geometry",
    "lmo",
    "dual_norm",
    "primal_norm",
    "kappa",
    "orthogonalize_exact",
    "orthogonalize_ns",
    "geometry_from_config",
    "geometry_name",
    "NS_COEFFS",
    "NS_SCHEDULE",
    "MUON_COEFFS",
    "design_ns_schedule",
    "spectral_scale",
]

# Classic fixed quintic used by most Muon implementations. Fast, but leaves
# singular values scattered in roughly [0.7, 1.15].
MUON_COEFFS = (3.4445, -4.7750, 2.0315)

# Per-step odd quintics from ``design_ns_schedule(0.008, 1.05, 5)``: each is
# the minimax approximation of 1 on the image of the previous step, with
# p(1) = 1 pinned so orthogonal inputs are fixed points. After spectral
# pre-scaling this covers condition numbers up to ~125 at ~3e-3 error.
NS_SCHEDULE = (
    (7.750826686995111, -20.357840895808206, 13.607014208813098),
    (2.7274437582506654, -2.1820639013929695, 0.45462014314230415),
    (2.604726780679787, -2.065133420515301, 0.46040663983551444),
    (2.247268290053713, -1.6809117213927587, 0.4336434313390459),
    (1.9051965229753685, -1.2860010013463106, 0.3808044783709421),
)
NS_COEFFS = NS_SCHEDULE


@dataclass(frozen=True)
class Euclidean:
    pass


@dataclass(frozen=True)
class EntrywiseMax:
    pass


@dataclass(frozen=True)
class Spectral:
    """Spectral-norm geometry.

    Matrices whose smaller side is at most ``exact_max_dim`` are orthogonalized
    with an exact SVD; larger ones use ``ns_steps`` Newton-Schulz iterations.
    """

    ns_steps: int = 5
    exact_max_dim: int = 8


LayerKind = Union[Euclidean, EntrywiseMax, Spectral]


@dataclass(frozen=True)
class LayerwiseMax:
    kinds: tuple[LayerKind, ...]

    def __post_init__(self):
        kinds = tuple(self.kinds)
        if not kinds:
            raise ValueError("LayerwiseMax needs at least one layer kind")
        for k in kinds:
            if not isinstance(k, (Euclidean, EntrywiseMax, Spectral)):
                raise TypeError(f"LayerwiseMax cannot nest {k!r}")
        object.__setattr__(self, "kinds", kinds)


Geometry = Union[Euclidean, EntrywiseMax, Spectral, LayerwiseMax]


def _per_layer(geom: Geometry, n_layers: int) -> tuple[LayerKind, ...] | None:
    """Per-layer kinds, or None for the jointly-normalized Euclidean case."""
    if isinstance(geom, Euclidean):
        return None
    if isinstance(geom, LayerwiseMax):
        if len(geom.kinds) != n_layers:
            raise ShapeMismatch(
                f"LayerwiseMax has {len(geom.kinds)} kinds for {n_layers} layers"
            )
        return geom.kinds
    if isinstance(geom, (EntrywiseMax, Spectral)):
        return (geom,) * n_layers
    raise TypeError(f"unknown geometry {geom!r}")


def _compact_rank(s: np.ndarray, shape) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    cutoff = max(shape) * np.finfo(np.float64).eps * s[0]
    return int(np.count_nonzero(s > cutoff))


def orthogonalize_exact(G) -> np.ndarray:
    """Polar factor ``U_r V_r^T`` over the strictly positive singular values."""
    G = np.asarray(G, dtype=np.float64)
    U, s, Vt = jacobi_svd(G)
    r = _compact_rank(s, G.shape)
    return U[:, :r] @ Vt[:r, :]


def design_ns_schedule(lower: float, upper: float, steps: int, grid: int = 6000):
    """Greedy minimax design of an odd-quintic Newton-Schulz schedule.

    Step ``i`` solves ``min_p max_{x in [l_i, u_i]} |1 - p(x)|`` over
    ``p(x) = a x + b x^3 + c x^5`` with ``p(1) = 1`` (a linear program on a
    dense grid); ``[l_{i+1}, u_{i+1}]`` is the image of ``[l_i, u_i]``.
    Returns ``(coeffs, final_interval)``.
    """
    from scipy.optimize import linprog

    lo, hi = float(lower), float(upper)
    schedule = []
    for _ in range(steps):
        x = np.unique(np.concatenate([np.geomspace(lo, hi, grid), np.linspace(lo, hi, grid)]))
        A = np.stack([x, x**3, x**5], axis=1)
        ones = np.ones((x.size, 1))
        res = linprog(
            c=[0.0, 0.0, 0.0, 1.0],
            A_ub=np.vstack([np.hstack([A, -ones]), np.hstack([-A, -ones])]),
            b_ub=np.concatenate([np.ones(x.size), -np.ones(x.size)]),
            A_eq=[[1.0, 1.0, 1.0, 0.0]],
            b_eq=[1.0],
            bounds=[(None, None)] * 3 + [(0.0, None)],
            method="highs",
        )
        if not res.success:
            raise RuntimeError(f"minimax design failed: {res.message}")
        coeffs = tuple(float(v) for v in res.x[:3])
        y = A @ res.x[:3]
        lo, hi = float(y.min()), float(y.max())
        schedule.append(coeffs)
    return tuple(schedule), (lo, hi)


def spectral_scale(G: np.ndarray, squarings: int = 8) -> float:
    """Estimate of the largest singular value of ``G`` (never above it).

    Repeated squaring of the trace-normalized Gram matrix isolates the leading
    eigenvector (``2**squarings`` power steps in ``squarings`` products); its
    Rayleigh quotient is returned. Exact when all singular values are equal.
    """
    gram = G.T @ G if G.shape[0] >= G.shape[1] else G @ G.T
    B = gram / np.trace(gram)
    P = B
    for _ in range(squarings):
        P = P @ P
        tr = np.trace(P)
        if tr == 0.0:
            break
        P = P / tr
    j = int(np.argmax(np.einsum("ij,ij->j", P, P)))
    v = P[:, j] / np.linalg.norm(P[:, j])
    return float(np.sqrt(max(v @ gram @ v, 0.0)))


def orthogonalize_ns(G, steps: int = 5, coeffs=NS_SCHEDULE) -> np.ndarray:
    """Approximate the polar factor of ``G`` with quintic Newton-Schulz steps.

    Each step is ``X <- aX + b (X X^T) X + c (X X^T)^2 X``. ``coeffs`` is either
    one ``(a, b, c)`` triple reused every step or a per-step schedule; a
    schedule shorter than ``steps`` repeats its last entry. The input is
    pre-scaled by ``spectral_scale`` for schedules (they pin p(1) = 1) and by
    the Frobenius norm for a single fixed triple.
    """
    X = np.array(G, dtype=np.float64)
    if not X.any():
        raise DegenerateGradient("Newton-Schulz orthogonalization of a zero matrix")
    coeffs = tuple(coeffs)
    if isinstance(coeffs[0], (int, float)):
        schedule, scale = (coeffs,), np.linalg.norm(X)
    else:
        schedule, scale = coeffs, spectral_scale(X)
    transposed = X.shape[0] > X.shape[1]
    if transposed:
        X = X.T
    X = X / scale
    for i in range(steps):
        a, b, c = schedule[min(i, len(schedule) - 1)]
        A = X @ X.T
        X = a * X + (b * A + c * (A @ A)) @ X
    return X.T if transposed else X


def _layer_lmo(g: np.ndarray, kind: LayerKind) -> np.ndarray:
    if isinstance(kind, EntrywiseMax):
        return -np.sign(g)
    if not g.any():
        return np.zeros_like(g)
    if isinstance(kind, Euclidean):
        return -g / np.linalg.norm(g)
    if min(g.shape) <= kind.exact_max_dim:
        return -orthogonalize_exact(g)
    return -orthogonalize_ns(g, kind.ns_steps)


def _layer_dual(g: np.ndarray, kind: LayerKind) -> float:
    if isinstance(kind, EntrywiseMax):
        return float(np.abs(g).sum())
    if isinstance(kind, Euclidean):
        return float(np.linalg.norm(g))
    return float(jacobi_svd(g)[1].sum())


def _layer_primal(x: np.ndarray, kind: LayerKind) -> float:
    if isinstance(kind, EntrywiseMax):
        return float(np.abs(x).max())
    if isinstance(kind, Euclidean):
        return float(np.linalg.norm(x))
    return float(jacobi_svd(x)[1][0])


def lmo(g: ParamSet, geom: Geometry) -> ParamSet:
    """``argmin_{||q|| = 1} <g, q>`` under ``geom``.

    Zero layers map to zero directions. A gradient that is zero everywhere is
    rejected for the Euclidean and spectral geometries (the minimizer is not
    unique), and maps to zero under the entrywise geometry (``sign(0) = 0``).
    """
    kinds = _per_layer(geom, len(g))
    if kinds is None:
        norm = frobenius_norm(g)
        if norm == 0.0:
            raise DegenerateGradient("zero gradient under Euclidean geometry")
        return g * (-1.0 / norm)
    if g.is_zero() and any(not isinstance(k, EntrywiseMax) for k in kinds):
        raise DegenerateGradient("zero gradient has no unit-norm LMO")
    return ParamSet(tuple(_layer_lmo(a, k) for a, k in zip(g.layers, kinds)))


def dual_norm(g: ParamSet, geom: Geometry) -> float:
    kinds = _per_layer(geom, len(g))
    if kinds is None:
        return frobenius_norm(g)
    return float(sum(_layer_dual(a, k) for a, k in zip(g.layers, kinds)))


def primal_norm(x: ParamSet, geom: Geometry) -> float:
    kinds = _per_layer(geom, len(x))
    if kinds is None:
        return frobenius_norm(x)
    return float(max(_layer_primal(a, k) for a, k in zip(x.layers, kinds)))


def _layer_kappa(shape: tuple[int, int], kind: LayerKind) -> int:
    m, n = shape
    if isinstance(kind, Spectral):
        return min(m, n)
    if isinstance(kind, EntrywiseMax):
        return m * n
    return 1


def kappa(shapes: ShapeSpec, geom: Geometry) -> float:
    """Worst-case squared Frobenius norm over the unit ball of ``geom``.

    Spectral layers contribute ``min(m, n)``, entrywise layers ``m * n`` and
    per-layer Euclidean layers 1. A bare ``Euclidean`` geometry is a single
    ball, so its value is 1.
    """
    kinds = _per_layer(geom, len(shapes))
    if kinds is None:
        return 1.0
    return float(sum(_layer_kappa(s, k) for s, k in zip(shapes, kinds)))


_NAMES = {"euclidean": Euclidean, "sign": EntrywiseMax, "spectral": Spectral}


def geometry_from_config(value, n_layers: int | None = None) -> Geometry:
    """Parse ``"euclidean" | "sign" | "spectral"`` or a per-layer list of them."""
    if isinstance(value, str):
        try:
            return _NAMES[value]()
        except KeyError:
            raise ValueError(f"unknown geometry {value!r}") from None
    if isinstance(value, Sequence):
        kinds = []
        for v in value:
            if v not in _NAMES:
                raise ValueError(f"unknown per-layer geometry {v!r}")
            kinds.append(_NAMES[v]())
        if n_layers is not None and len(kinds) != n_layers:
            raise ShapeMismatch(f"geometry lists {len(kinds)} layers, model has {n_layers}")
        return LayerwiseMax(tuple(kinds))
    raise ValueError(f"cannot parse geometry {value!r}")


def geometry_name(geom: Geometry) -> str:
    rev = {v: k for k, v in _NAMES.items()}
    if isinstance(geom, LayerwiseMax):
        return "layerwise[" + ",".join(rev[type(k)] for k in geom.kinds) + "]"
    return rev[type(geom)]
