"""Parameter containers and the small dense linear-algebra kernel.

A model is an ordered tuple of real matrices (vectors are ``n x 1``).
Everything here is dense float64 and sized for desk-scale problems.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeMismatch

__all__ = [
    "ShapeSpec",
    "ParamSet",
    "add_scaled",
    "inner_product",
    "frobenius_norm",
    "singular_values",
    "jacobi_svd",
]


@dataclass(frozen=True)
class ShapeSpec:
    layers: tuple[tuple[int, int], ...]

    def __post_init__(self):
        layers = tuple((int(m), int(n)) for m, n in self.layers)
        if not layers:
            raise ShapeMismatch("ShapeSpec needs at least one layer")
        if any(m < 1 or n < 1 for m, n in layers):
            raise ShapeMismatch(f"all dimensions must be >= 1, got {layers}")
        object.__setattr__(self, "layers", layers)

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    @property
    def size(self) -> int:
        return sum(m * n for m, n in self.layers)


def _as_matrix(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeMismatch(f"layers must be at most 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ParamSet:
    """Immutable ordered collection of dense real matrices.

    1-D inputs become column vectors. Construction rejects NaN/Inf, which
    makes every operation returning a ParamSet finite-checked for free.
    """

    layers: tuple[np.ndarray, ...]

    def __post_init__(self):
        layers = tuple(_as_matrix(a) for a in self.layers)
        if not layers:
            raise ShapeMismatch("ParamSet needs at least one layer")
        for a in layers:
            if not np.isfinite(a).all():
                raise NumericalError("non-finite entry in ParamSet")
            a.flags.writeable = False
        object.__setattr__(self, "layers", layers)

    @classmethod
    def _fresh(cls, layers: tuple) -> "ParamSet":
        # layers are newly computed float64 2-D arrays owned by nobody else
        for a in layers:
            if not np.isfinite(a).all():
                raise NumericalError("non-finite entry in ParamSet")
            a.flags.writeable = False
        obj = object.__new__(cls)
        object.__setattr__(obj, "layers", layers)
        return obj

    @classmethod
    def of(cls, *layers) -> "ParamSet":
        return cls(tuple(layers))

    @classmethod
    def zeros(cls, shapes: ShapeSpec) -> "ParamSet":
        return cls(tuple(np.zeros(s) for s in shapes))

    @classmethod
    def from_flat(cls, flat: np.ndarray, shapes: ShapeSpec) -> "ParamSet":
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size != shapes.size:
            raise ShapeMismatch(f"expected {shapes.size} entries, got {flat.size}")
        out, i = [], 0
        for m, n in shapes:
            out.append(flat[i:i + m * n].reshape(m, n))
            i += m * n
        return cls(tuple(out))

    @property
    def shapes(self) -> ShapeSpec:
        return ShapeSpec(tuple(a.shape for a in self.layers))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.layers])

    def map(self, fn) -> "ParamSet":
        return ParamSet(tuple(fn(a) for a in self.layers))

    def is_zero(self) -> bool:
        return all(not a.any() for a in self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.layers[i]

    def __add__(self, other: "ParamSet") -> "ParamSet":
        return add_scaled(self, other, 1.0)

    def __sub__(self, other: "ParamSet") -> "ParamSet":
        return add_scaled(self, other, -1.0)

    def __mul__(self, alpha: float) -> "ParamSet":
        alpha = float(alpha)
        return ParamSet._fresh(tuple(alpha * a for a in self.layers))

    __rmul__ = __mul__

    def __neg__(self) -> "ParamSet":
        return self * -1.0

    def allclose(self, other: "ParamSet", rtol=1e-9, atol=1e-12) -> bool:
        _check_same_shape(self, other)
        return all(np.allclose(a, b, rtol=rtol, atol=atol) for a, b in zip(self.layers, other.layers))

    def __repr__(self) -> str:
        inner = ", ".join(np.array2string(a, separator=",").replace("\n", "") for a in self.layers)
        return f"ParamSet({inner})"


def _check_same_shape(a: ParamSet, b: ParamSet) -> None:
    if len(a.layers) != len(b.layers) or any(
        x.shape != y.shape for x, y in zip(a.layers, b.layers)
    ):
        raise ShapeMismatch(
            f"shape mismatch: {[x.shape for x in a.layers]} vs {[y.shape for y in b.layers]}"
        )


def add_scaled(a: ParamSet, b: ParamSet, alpha: float) -> ParamSet:
    """Layer-wise ``a + alpha * b``."""
    _check_same_shape(a, b)
    alpha = float(alpha)
    return ParamSet._fresh(tuple(x + alpha * y for x, y in zip(a.layers, b.layers)))


def inner_product(a: ParamSet, b: ParamSet) -> float:
    """Trace inner product summed over layers."""
    _check_same_shape(a, b)
    return float(sum(np.vdot(x, y) for x, y in zip(a.layers, b.layers)))


def frobenius_norm(a: ParamSet) -> float:
    return float(np.sqrt(sum(np.vdot(x, x) for x in a.layers)))


def jacobi_svd(M, tol: float = 1e-12, max_sweeps: int | None = None):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``(U, s, Vt)`` with ``s`` descending, ``U`` of shape ``m x k`` and
    ``Vt`` of shape ``k x n`` where ``k = min(m, n)``. Columns of ``U`` belonging
    to exactly-zero singular values are left as zero vectors.

    Raises NumericalError if orthogonality is not reached within
    ``max_sweeps`` sweeps (default ``10 * k**2``).
    """
    A = np.array(M, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("jacobi_svd expects a matrix")
    if not np.isfinite(A).all():
        raise NumericalError("jacobi_svd input has non-finite entries")
    transposed = A.shape[0] < A.shape[1]
    if transposed:
        A = A.T.copy()
    m, n = A.shape
    if max_sweeps is None:
        max_sweeps = 10 * n * n
    W = A.copy()
    V = np.eye(n)
    # columns below this squared norm are numerically zero
    negligible = (np.finfo(np.float64).eps * np.linalg.norm(A)) ** 2

    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp, wq = W[:, p], W[:, q]
                alpha = wp @ wp
                beta = wq @ wq
                gamma = wp @ wq
                if min(alpha, beta) <= negligible or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                W[:, [p, q]] = np.column_stack((c * wp - s * wq, s * wp + c * wq))
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise NumericalError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sv = np.sqrt(np.einsum("ij,ij->j", W, W))
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    W = W[:, order]
    V = V[:, order]
    U = np.zeros_like(W)
    nz = sv > 0
    U[:, nz] = W[:, nz] / sv[nz]

    if transposed:
        return V, sv, U.T
    return U, sv, V.T


def singular_values(M) -> np.ndarray:
    """Singular values of ``M`` in descending order (``min(m, n)`` of them)."""
    return jacobi_svd(M)[1]
