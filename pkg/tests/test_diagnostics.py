import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import spearmanr

from warmup_lab.config import load_config
from warmup_lab.diagnostics import (
    SmoothnessSample,
    fit_quadratic,
    fit_summary,
    grad_check,
    smoothness_ratio,
    verify_constraints,
)
from warmup_lab.errors import DegenerateInput, FitError
from warmup_lab.geometry import EntrywiseMax, Euclidean
from warmup_lab.harness import run_training
from warmup_lab.params import ParamSet, ShapeSpec
from warmup_lab.problems import coshsum_make, mlp_make, quadratic_make
from warmup_lab.schedulers import solve_coefficients

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def quad(dim=5, seed=0):
    rng = np.random.default_rng(seed)
    return quadratic_make(ShapeSpec(((dim, 1),)), ParamSet((rng.standard_normal((dim, 1)),)))


def samples_from(coeffs, deltas):
    K0, K1, K2 = coeffs
    return [SmoothnessSample(d, K0 + K1 * d + K2 * d * d) for d in deltas]


class TestSmoothnessRatio:
    @given(st.integers(0, 10_000))
    def test_quadratic_euclidean_is_one(self, seed):
        q = quad()
        rng = np.random.default_rng(seed)
        x = ParamSet((rng.standard_normal((5, 1)),))
        y = ParamSet((rng.standard_normal((5, 1)),))
        assert smoothness_ratio(q, x, y, Euclidean()) == pytest.approx(1.0, rel=1e-12)

    def test_coshsum_series(self):
        c = coshsum_make(1)
        h = 1e-3
        ratio = smoothness_ratio(c, ParamSet((np.zeros((1, 1)),)), ParamSet((np.full((1, 1), h),)), Euclidean())
        assert ratio == pytest.approx(1.0 + h * h / 6.0, rel=1e-12)

    @given(st.integers(0, 10_000))
    def test_quadratic_max_geometry_bounds(self, seed):
        q = quad()
        rng = np.random.default_rng(seed)
        x = ParamSet((rng.standard_normal((5, 1)),))
        y = ParamSet((rng.standard_normal((5, 1)),))
        step = (y - x).flat()
        ratio = smoothness_ratio(q, x, y, EntrywiseMax())
        assert ratio == pytest.approx(np.abs(step).sum() / np.abs(step).max(), rel=1e-12)
        assert 1.0 - 1e-12 <= ratio <= 5.0 + 1e-12

    def test_zero_displacement(self):
        q = quad()
        with pytest.raises(DegenerateInput):
            smoothness_ratio(q, q.x0, q.x0, Euclidean())


class TestFit:
    def test_exact_recovery(self):
        K = fit_quadratic(samples_from((5.0, 2.0, 30.0), [0.5, 1.0, 2.0, 4.0]))
        assert np.allclose(K, (5.0, 2.0, 30.0), rtol=0, atol=1e-8)

    def test_exact_recovery_relative(self):
        K = fit_quadratic(samples_from((5.0, 2.0, 30.0), [0.5, 1.0, 2.0, 4.0]), relative=True)
        assert np.allclose(K, (5.0, 2.0, 30.0), rtol=0, atol=1e-8)

    def test_constant(self):
        K = fit_quadratic([SmoothnessSample(d, 7.0) for d in (0.1, 0.5, 1.0, 3.0, 9.0)])
        assert np.allclose(K, (7.0, 0.0, 0.0), atol=1e-10)

    def test_too_few_distinct(self):
        with pytest.raises(FitError):
            fit_quadratic([SmoothnessSample(1.0, 1.0), SmoothnessSample(1.0, 2.0), SmoothnessSample(2.0, 3.0)])

    def test_condition_guard(self):
        near = [SmoothnessSample(1.0 + k * 1e-7, 1.0) for k in range(3)]
        with pytest.raises(FitError):
            fit_quadratic(near)

    def test_relative_needs_positive_ratios(self):
        with pytest.raises(FitError):
            fit_quadratic(samples_from((0.0, -1.0, 0.0), [1.0, 2.0, 3.0]), relative=True)

    def test_matches_lstsq(self):
        rng = np.random.default_rng(3)
        d = rng.uniform(0, 5, 50)
        r = rng.uniform(0, 10, 50)
        A = np.stack([np.ones_like(d), d, d * d], axis=1)
        want = np.linalg.lstsq(A, r, rcond=None)[0]
        got = fit_quadratic([SmoothnessSample(a, b) for a, b in zip(d, r)])
        assert np.allclose(got, want, rtol=1e-9, atol=1e-12)

    def test_summary(self):
        s = fit_summary(samples_from((1.0, 0.0, 2.0), [0.0, 1.0, 2.0, 3.0]))
        assert s["n_samples"] == 4 and s["rms_residual"] < 1e-10
        assert s["delta_min"] == 0.0 and s["delta_max"] == 3.0
        assert {"K0", "K1", "K2"} <= set(s)


class TestVerifyConstraints:
    def test_solver_output_passes(self):
        rep = verify_constraints(solve_coefficients(1e-3, 100, 8, 2))
        assert rep.passed
        assert max(rep.peak_residual, rep.floor_residual, rep.critical_residual) <= 1e-9

    def test_corrupted_K0(self):
        c = solve_coefficients(1e-3, 100, 8, 2)
        bad = replace(c, K0=c.K0 * 1.01)
        # independent re-evaluation of the floor value at delta0 = 8
        floor = 8.0 / (88880.0 - 87000.0 * 8.0 + 22000.0 * 64.0)
        expected = abs(floor - 1e-5) / 1e-5
        rep = verify_constraints(bad)
        assert not rep.passed
        assert rep.floor_residual == pytest.approx(expected, rel=1e-9)
        assert rep.critical_residual == pytest.approx(0.01 / 1.01, rel=1e-9)
        peak = 2.0 / (88880.0 - 87000.0 * 2.0 + 22000.0 * 4.0)
        assert rep.peak_residual == pytest.approx(abs(peak - 1e-3) / 1e-3, rel=1e-9)
        assert "critical" in rep.failures and "floor" in rep.failures

    def test_negative_denominator(self):
        c = solve_coefficients(1e-3, 100, 8, 2)
        rep = verify_constraints(replace(c, K0=-1.0))
        assert not rep.passed and rep.failures == ["denominator"]

    def test_div_one(self):
        c = solve_coefficients(0.5, 1.0, 3.0, 1.0)
        rep = verify_constraints(c)
        assert rep.passed


class TestGradCheck:
    def test_quadratic(self):
        q = quad(8)
        assert grad_check(q, q.x0) <= 1e-9

    def test_coshsum(self):
        c = coshsum_make(10)
        assert grad_check(c, c.x0) <= 1e-6

    def test_mlp(self):
        m = mlp_make(6, 24, seed=0, d_in=4)
        assert grad_check(m, m.x0) <= 1e-5

    def test_detects_wrong_gradient(self):
        q = quad(4)

        class Broken:
            shapes = q.shapes

            def value(self, x):
                return q.value(x)

            def grad(self, x):
                return q.grad(x) * 1.1

        assert grad_check(Broken(), q.x0) > 0.05


def test_coshsum_trace_ratio_tracks_gap():
    trace = run_training(load_config(CONFIGS / "coshsum_diagnose.json"), diagnose=True)
    samples = trace.smoothness_samples()
    assert len(samples) >= 100
    d = np.array([s.delta for s in samples])
    r = np.array([s.ratio for s in samples])
    assert np.all(np.isfinite(r)) and np.all(r > 0)
    rho = spearmanr(d, r).statistic
    assert rho >= 0.9
    K0, K1, K2 = fit_quadratic(samples)
    grid = np.linspace(d.min(), d.max(), 200)
    assert np.all(K0 + K1 * grid + K2 * grid * grid >= -1e-9)
    assert math.isfinite(fit_summary(samples)["rms_residual"])
