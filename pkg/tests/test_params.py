import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from warmup_lab.errors import NumericalError, ShapeMismatch
from warmup_lab.params import (
    ParamSet,
    ShapeSpec,
    add_scaled,
    frobenius_norm,
    inner_product,
    jacobi_svd,
    singular_values,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def matrices(max_dim=6):
    shape = st.tuples(st.integers(1, max_dim), st.integers(1, max_dim))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=finite))


def triple_of_same_shape():
    shape = st.tuples(st.integers(1, 5), st.integers(1, 5))
    return shape.flatmap(lambda s: st.tuples(*(arrays(np.float64, s, elements=finite) for _ in range(3))))


class TestShapeSpec:
    def test_rejects_empty_and_zero_dims(self):
        with pytest.raises(ValueError):
            ShapeSpec(())
        with pytest.raises(ValueError):
            ShapeSpec(((0, 3),))

    def test_size(self):
        assert ShapeSpec(((4, 3), (2, 5))).size == 22


class TestParamSet:
    def test_vectors_become_columns(self):
        p = ParamSet.of([1.0, 2.0, 3.0])
        assert p.layers[0].shape == (3, 1)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericalError):
            ParamSet.of([[np.nan]])
        with pytest.raises(NumericalError), np.errstate(over="ignore"):
            ParamSet.of([[1e308]]) * 10.0

    def test_layers_are_read_only_copies(self):
        src = np.zeros((2, 2))
        p = ParamSet.of(src)
        src[0, 0] = 5.0
        assert p.layers[0][0, 0] == 0.0
        with pytest.raises(ValueError):
            p.layers[0][0, 0] = 1.0

    def test_flat_round_trip(self, rng):
        shapes = ShapeSpec(((3, 2), (1, 4)))
        flat = rng.standard_normal(shapes.size)
        assert np.array_equal(ParamSet.from_flat(flat, shapes).flat(), flat)

    def test_arithmetic_keeps_shape(self):
        a = ParamSet.of([[1.0, 2.0]], [[3.0]])
        out = 2.0 * a - a + (-a)
        assert out.shapes == a.shapes
        assert out.is_zero()


class TestAddScaled:
    @pytest.mark.parametrize(
        "a, b, alpha, expected",
        [
            ([[1, 2]], [[3, 4]], 0.0, [[1, 2]]),
            ([[1, 2]], [[3, 4]], -1.0, [[-2, -2]]),
            ([[0]], [[5]], 0.2, [[1]]),
        ],
    )
    def test_examples(self, a, b, alpha, expected):
        out = add_scaled(ParamSet.of(a), ParamSet.of(b), alpha)
        assert np.allclose(out.layers[0], expected)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            add_scaled(ParamSet.of([[1.0, 2.0]]), ParamSet.of([[1.0], [2.0]]), 1.0)


class TestInnerProductAndNorm:
    def test_examples(self):
        eye = ParamSet.of(np.eye(2))
        assert inner_product(eye, eye) == 2.0
        assert inner_product(ParamSet.of([[1, 0]]), ParamSet.of([[0, 1]])) == 0.0
        assert inner_product(ParamSet.of([[1, 2, 3]]), ParamSet.of([[4, 5, 6]])) == 32.0

    def test_norm_examples(self):
        assert frobenius_norm(ParamSet.zeros(ShapeSpec(((2, 2),)))) == 0.0
        assert frobenius_norm(ParamSet.of([[3, 4]])) == 5.0
        assert frobenius_norm(ParamSet.of([[1]], [[2, 2]])) == 3.0

    @given(triple_of_same_shape(), finite, finite)
    def test_symmetric_bilinear(self, abc, s, t):
        a, b, c = (ParamSet.of(m) for m in abc)
        scale = 1.0 + frobenius_norm(a) * (frobenius_norm(b) + frobenius_norm(c)) * (1 + abs(s) + abs(t))
        assert inner_product(a, b) == pytest.approx(inner_product(b, a), abs=1e-12 * scale)
        lhs = inner_product(a, add_scaled(b * s, c, t))
        rhs = s * inner_product(a, b) + t * inner_product(a, c)
        assert lhs == pytest.approx(rhs, abs=1e-12 * scale)

    @given(triple_of_same_shape(), finite)
    def test_triangle_inequality(self, abc, alpha):
        a, b, _ = (ParamSet.of(m) for m in abc)
        lhs = frobenius_norm(add_scaled(a, b, alpha))
        rhs = frobenius_norm(a) + abs(alpha) * frobenius_norm(b)
        assert lhs <= rhs * (1 + 1e-12) + 1e-12


class TestSingularValues:
    def test_examples(self):
        assert np.allclose(singular_values(np.diag([2.0, 5.0])), [5.0, 2.0])
        assert np.allclose(singular_values(np.ones((2, 2))), [2.0, 0.0], atol=1e-12)

    def test_matches_gram_eigenvalues(self, rng):
        M = rng.standard_normal((6, 4))
        oracle = np.sqrt(np.clip(np.linalg.eigvalsh(M.T @ M), 0, None))[::-1]
        assert np.allclose(singular_values(M), oracle, atol=1e-9)

    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31 - 1))
    def test_recovers_planted_spectrum(self, m, n, seed):
        rng = np.random.default_rng(seed)
        k = min(m, n)
        Q, _ = np.linalg.qr(rng.standard_normal((m, k)))
        P, _ = np.linalg.qr(rng.standard_normal((n, k)))
        s = np.sort(rng.uniform(0.0, 10.0, k))[::-1]
        assert np.allclose(singular_values((Q * s) @ P.T), s, atol=1e-9)

    @given(matrices(7))
    def test_reconstruction(self, M):
        U, s, Vt = jacobi_svd(M)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        assert np.linalg.norm((U * s) @ Vt - M) <= 1e-10 * max(np.linalg.norm(M), 1e-300)
        assert np.allclose(s, np.linalg.svd(M, compute_uv=False), atol=1e-9 * max(1.0, s[0]))

    def test_wide_and_tall_agree(self, rng):
        M = rng.standard_normal((3, 7))
        assert np.allclose(singular_values(M), singular_values(M.T))
