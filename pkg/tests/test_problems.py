import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from warmup_lab.diagnostics import grad_check
from warmup_lab.params import ParamSet, ShapeSpec
from warmup_lab.problems import (
    InterpLeastSquares,
    LeastSquares,
    batch_delta,
    coshsum_make,
    interp_least_squares_make,
    mlp_make,
    quadratic_make,
)


def col(*v):
    return ParamSet((np.array(v, dtype=float).reshape(-1, 1),))


def random_like(obj, rng, scale=1.0):
    return ParamSet(tuple(scale * rng.standard_normal(s) for s in obj.shapes))


class TestQuadratic:
    def make(self):
        shapes = ShapeSpec(((1, 2),))
        return quadratic_make(shapes, ParamSet((np.array([[1.0, -1.0]]),)))

    def test_optimum(self):
        q = self.make()
        assert q.value(q.x_star) == 0.0 and q.f_star == 0.0
        assert np.all(q.grad(q.x_star).layers[0] == 0)

    def test_example(self):
        q = self.make()
        x = ParamSet((np.array([[4.0, 3.0]]),))
        assert q.value(x) == 12.5
        assert np.linalg.norm(q.grad(x).layers[0]) == 5.0

    def test_known_constants(self):
        kc = self.make().known_constants
        assert (kc.K0, kc.K1, kc.Krho) == (1.0, 0.0, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            quadratic_make(ShapeSpec(((2, 2),)), ParamSet((np.zeros((1, 2)),)))

    @given(st.integers(0, 10_000))
    def test_unit_smoothness_ratio(self, seed):
        q = self.make()
        rng = np.random.default_rng(seed)
        x, y = random_like(q, rng), random_like(q, rng)
        gx, gy = q.grad(x).flat(), q.grad(y).flat()
        ratio = np.linalg.norm(gx - gy) / np.linalg.norm(x.flat() - y.flat())
        assert ratio == pytest.approx(1.0, rel=1e-12)


class TestCoshSum:
    def test_zero(self):
        c = coshsum_make(3)
        assert c.value(ParamSet.zeros(c.shapes)) == 0.0
        assert c.f_star == 0.0 and c.known_constants is None

    def test_ln2(self):
        c = coshsum_make(1)
        x = col(math.log(2))
        assert c.value(x) == pytest.approx(0.25, rel=1e-14)
        assert c.grad(x).layers[0][0, 0] == pytest.approx(0.75, rel=1e-14)

    def test_ratio_limit(self):
        c = coshsum_make(1)
        h = 1e-3
        ratio = abs(c.grad(col(h)).layers[0][0, 0] - c.grad(col(0.0)).layers[0][0, 0]) / h
        assert ratio == pytest.approx(1.0, abs=1e-6)

    def test_start_in_box(self):
        c = coshsum_make(50, seed=4, scale=2.0)
        assert np.all(np.abs(c.x0.layers[0]) <= 2.0)


class TestInterpolation:
    def test_hand_example(self):
        s = InterpLeastSquares(np.array([[1.0, 0.0]]), col(1.0, 0.0), col(0.0, 0.0))
        batch = s.sample(0, 0)
        assert batch.value(col(2.0, 7.0)) == 0.5
        d, g = batch_delta(s, col(2.0, 7.0), 0, 0)
        assert d == 0.5
        assert np.allclose(g.layers[0].ravel(), [1.0, 0.0])

    def test_batch_delta_is_half_residual_squared(self):
        s = interp_least_squares_make(10, 4, seed=1)
        x = col(0.3, -0.2, 1.0, 2.0)
        rows = s.batch_rows(7, 123)
        a, b = s.A[rows[0]], s.b[rows[0], 0]
        d, _ = batch_delta(s, x, 7, 123)
        assert d == pytest.approx(0.5 * (a @ x.layers[0][:, 0] - b) ** 2, rel=1e-13)

    def test_planted_solution_over_1000_batches(self):
        s = interp_least_squares_make(10, 10, seed=0)
        for i in range(1000):
            d, g = batch_delta(s, s.x_star, 3, i)
            assert d - 0.0 <= 1e-12
            assert np.max(np.abs(g.layers[0])) <= 1e-12

    def test_sampling_is_pure(self):
        s = interp_least_squares_make(10, 3, seed=0)
        first = [int(s.batch_rows(5, i)[0]) for i in range(5000)]
        again = [int(s.batch_rows(5, i)[0]) for i in reversed(range(5000))][::-1]
        assert first == again
        assert set(first) == set(range(10))

    def test_minibatch_rows_distinct(self):
        s = interp_least_squares_make(10, 3, seed=0, batch_size=4)
        rows = s.batch_rows(0, 9)
        assert len(set(rows.tolist())) == 4
        assert np.array_equal(rows, s.batch_rows(0, 9))

    def test_full_objective_is_average(self):
        s = interp_least_squares_make(6, 3, seed=2)
        x = col(1.0, 2.0, 3.0)
        singles = [LeastSquares(s.A[i:i + 1], s.b[i:i + 1]).value(x) for i in range(6)]
        assert s.full_objective.value(x) == pytest.approx(np.mean(singles), rel=1e-13)

    def test_per_batch_constant_bounds_gradient(self):
        s = interp_least_squares_make(10, 5, seed=0)
        rng = np.random.default_rng(0)
        for i in range(200):
            x = random_like(s, rng, 3.0)
            _, g = batch_delta(s, x, 1, i)
            dist = np.linalg.norm(x.flat() - s.x_star.flat())
            assert np.linalg.norm(g.flat()) <= s.known_constants.K0 * dist * (1 + 1e-12)

    @given(st.integers(0, 10_000), st.integers(0, 10_000))
    def test_batch_delta_nonnegative(self, seed, index):
        s = interp_least_squares_make(8, 3, seed=seed % 7)
        x = random_like(s, np.random.default_rng(seed))
        assert batch_delta(s, x, seed, index)[0] >= 0.0


class TestMLP:
    def test_teacher_is_optimal(self):
        m = mlp_make(8, 32, seed=0)
        assert m.value(m.x_star) == 0.0 and m.f_star == 0.0
        assert np.max(np.abs(m.grad(m.x_star).flat())) == 0.0

    def test_nonnegative_on_probes(self):
        m = mlp_make(4, 16, seed=1, d_in=3)
        rng = np.random.default_rng(0)
        for _ in range(1000):
            assert m.value(random_like(m, rng, 2.0)) >= 0.0

    def test_student_differs_from_teacher(self):
        m = mlp_make(8, 32, seed=0)
        assert m.value(m.x0) > 0.0

    def test_deterministic(self):
        a, b = mlp_make(8, 32, seed=3), mlp_make(8, 32, seed=3)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.x0.flat(), b.x0.flat())


@pytest.mark.parametrize("name", ["quadratic", "coshsum", "least_squares", "mlp"])
def test_gradients_match_finite_differences(name):
    rng = np.random.default_rng(11)
    if name == "quadratic":
        obj = quadratic_make(ShapeSpec(((3, 2), (2, 1))),
                             ParamSet((rng.standard_normal((3, 2)), rng.standard_normal((2, 1)))))
    elif name == "coshsum":
        obj = coshsum_make(6)
    elif name == "least_squares":
        obj = interp_least_squares_make(10, 4, seed=0).full_objective
    else:
        obj = mlp_make(5, 20, seed=0, d_in=3)
    for _ in range(5):
        x = random_like(obj, rng)
        assert grad_check(obj, x) <= 1e-5
        assert obj.value(x) >= obj.f_star
