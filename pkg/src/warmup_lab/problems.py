"""Test objectives with a known optimum value.

Every objective carries ``f_star``, a default starting point ``x0`` and, where
known, a minimizer ``x_star``. Randomness comes from ``numpy.random.default_rng``
(PCG64) seeded by the integer ``seed``. Stochastic batches are a pure function
of ``(seed, index)``: single-row batches read a block of ``BLOCK`` indices
drawn from ``default_rng([seed, index // BLOCK])``, larger batches come from
``default_rng([seed, index])``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .params import ParamSet, ShapeSpec
from .schedulers import TheoreticalParams

__all__ = [
    "Objective",
    "Quadratic",
    "CoshSum",
    "LeastSquares",
    "TeacherMLP",
    "InterpLeastSquares",
    "quadratic_make",
    "coshsum_make",
    "interp_least_squares_make",
    "mlp_make",
    "batch_delta",
]


BLOCK = 4096


@lru_cache(maxsize=64)
def _index_block(seed: int, block: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, block]).integers(n, size=BLOCK)


class Objective:
    """A differentiable loss on a fixed ShapeSpec.

    Subclasses implement ``value_and_grad``; ``value`` and ``grad`` derive from it
    unless overridden.
    """

    f_star: float = 0.0
    x_star: Optional[ParamSet] = None
    known_constants: Optional[TheoreticalParams] = None
    shapes: ShapeSpec
    x0: ParamSet

    def value(self, x: ParamSet) -> float:
        return self.value_and_grad(x)[0]

    def grad(self, x: ParamSet) -> ParamSet:
        return self.value_and_grad(x)[1]

    def value_and_grad(self, x: ParamSet) -> tuple[float, ParamSet]:
        raise NotImplementedError

    __call__ = value


class Quadratic(Objective):
    """``0.5 * ||x - x_star||_F^2``."""

    def __init__(self, x_star: ParamSet, x0: ParamSet):
        self.x_star = x_star
        self.x0 = x0
        self.shapes = x_star.shapes
        self.f_star = 0.0
        self.known_constants = TheoreticalParams(rho=2.0, K0=1.0)

    def value_and_grad(self, x):
        r = x - self.x_star
        return 0.5 * float(sum(np.vdot(a, a) for a in r.layers)), r


class CoshSum(Objective):
    """``sum_i (cosh(x_i) - 1)`` on a single ``dim x 1`` layer."""

    def __init__(self, dim: int, x0: ParamSet):
        self.shapes = ShapeSpec(((dim, 1),))
        self.x_star = ParamSet.zeros(self.shapes)
        self.x0 = x0
        self.f_star = 0.0

    def value(self, x):
        return float(sum((np.cosh(a) - 1.0).sum() for a in x.layers))

    def grad(self, x):
        return x.map(np.sinh)

    def value_and_grad(self, x):
        return self.value(x), self.grad(x)


class LeastSquares(Objective):
    """Mean of ``0.5 * (a_i^T x - b_i)^2`` over the rows of ``A``.

    Used both for a single batch and for the full averaged objective.
    ``f_star`` is 0, which is exact whenever the system is consistent.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, x_star: Optional[ParamSet] = None,
                 x0: Optional[ParamSet] = None):
        self.A = np.atleast_2d(A)
        self.b = np.asarray(b, dtype=np.float64).reshape(-1, 1)
        self.shapes = ShapeSpec(((self.A.shape[1], 1),))
        self.x_star = x_star
        self.x0 = x0 if x0 is not None else ParamSet.zeros(self.shapes)
        self.f_star = 0.0

    def value_and_grad(self, x):
        r = self.A @ x.layers[0] - self.b
        n = self.A.shape[0]
        return 0.5 * float(np.vdot(r, r)) / n, ParamSet((self.A.T @ r / n,))


class TeacherMLP(Objective):
    """Two-layer tanh network fit to a same-architecture teacher.

    Parameters are ``(W1 [hidden x d_in], b1 [hidden x 1], W2 [1 x hidden])``
    and the loss is ``mean 0.5 * (W2 tanh(W1 x + b1) - y)^2``. The teacher
    weights reach loss 0, so ``f_star = 0``.
    """

    def __init__(self, X: np.ndarray, teacher: ParamSet, x0: ParamSet):
        self.X = X
        self.x_star = teacher
        self.x0 = x0
        self.shapes = teacher.shapes
        self.f_star = 0.0
        self.y = self.predict(teacher)

    def predict(self, x: ParamSet) -> np.ndarray:
        W1, b1, W2 = x.layers
        return np.tanh(self.X @ W1.T + b1.T) @ W2.T

    def value(self, x):
        r = self.predict(x) - self.y
        return 0.5 * float(np.mean(r * r))

    def value_and_grad(self, x):
        W1, b1, W2 = x.layers
        n = self.X.shape[0]
        H = np.tanh(self.X @ W1.T + b1.T)
        r = H @ W2.T - self.y
        dW2 = (r.T @ H) / n
        dZ = (r @ W2) * (1.0 - H * H) / n
        dW1 = dZ.T @ self.X
        db1 = dZ.sum(axis=0).reshape(-1, 1)
        return 0.5 * float(np.mean(r * r)), ParamSet((dW1, db1, dW2))


@dataclass
class InterpLeastSquares:
    """Consistent least squares with a planted solution.

    Every batch loss ``f_xi`` is zero at ``x_star``, so each batch shares the
    global minimizer (interpolation) and ``f_xi_star = 0``.
    """

    A: np.ndarray
    x_star: ParamSet
    x0: ParamSet
    batch_size: int = 1

    def __post_init__(self):
        self.b = self.A @ self.x_star.layers[0]
        self.full_objective = LeastSquares(self.A, self.b, self.x_star, self.x0)
        self.shapes = self.full_objective.shapes
        self.f_star = 0.0
        # ||grad f_xi(x)|| <= max_i ||a_i||^2 * ||x - x_star|| for every batch
        self.known_constants = TheoreticalParams(
            rho=2.0, K0=float(np.max(np.einsum("ij,ij->i", self.A, self.A)))
        )

    @property
    def n_samples(self) -> int:
        return self.A.shape[0]

    def batch_rows(self, seed: int, index: int) -> np.ndarray:
        if self.batch_size == 1:
            block, offset = divmod(index, BLOCK)
            return _index_block(seed, block, self.n_samples)[offset:offset + 1]
        rng = np.random.default_rng([seed, index])
        return rng.choice(self.n_samples, self.batch_size, replace=False)

    def sample(self, seed: int, index: int) -> LeastSquares:
        rows = self.batch_rows(seed, index)
        return LeastSquares(self.A[rows], self.b[rows], self.x_star)


def batch_delta(sobj: InterpLeastSquares, x: ParamSet, seed: int, index: int) -> tuple[float, ParamSet]:
    """Per-batch gap ``f_xi(x) - f_xi_star`` and batch gradient."""
    batch = sobj.sample(seed, index)
    value, grad = batch.value_and_grad(x)
    return value - batch.f_star, grad


def quadratic_make(shapes: ShapeSpec, x_star: ParamSet, x0: Optional[ParamSet] = None,
                   seed: int = 0) -> Quadratic:
    """Quadratic bowl around ``x_star``; ``x0`` defaults to ``x_star`` plus unit Gaussian noise."""
    if x_star.shapes != shapes:
        raise ValueError("x_star does not conform to shapes")
    if x0 is None:
        rng = np.random.default_rng(seed)
        x0 = ParamSet(tuple(a + rng.standard_normal(a.shape) for a in x_star.layers))
    return Quadratic(x_star, x0)


def coshsum_make(dim: int, seed: int = 0, scale: float = 2.0) -> CoshSum:
    """``sum cosh(x_i) - 1``; ``x0`` is uniform on ``[-scale, scale]^dim``."""
    rng = np.random.default_rng(seed)
    return CoshSum(dim, ParamSet((rng.uniform(-scale, scale, (dim, 1)),)))


def interp_least_squares_make(n_samples: int, dim: int, seed: int = 0,
                              batch_size: int = 1) -> InterpLeastSquares:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_samples, dim))
    x_star = ParamSet((rng.standard_normal((dim, 1)),))
    x0 = ParamSet((rng.standard_normal((dim, 1)),))
    return InterpLeastSquares(A, x_star, x0, batch_size)


def mlp_make(hidden: int, n_data: int, seed: int = 0, d_in: int = 8) -> TeacherMLP:
    """Teacher/student tanh MLP; teacher and student init use independent draws."""
    rng = np.random.default_rng(seed)

    def draw():
        return ParamSet((
            rng.standard_normal((hidden, d_in)) / np.sqrt(d_in),
            0.1 * rng.standard_normal((hidden, 1)),
            rng.standard_normal((1, hidden)) / np.sqrt(hidden),
        ))

    X = rng.standard_normal((n_data, d_in))
    teacher = draw()
    student = draw()
    return TeacherMLP(X, teacher, student)
