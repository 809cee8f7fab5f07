"""Built-in verification suite.

Each check returns a ``CheckResult`` with a name, the tolerance it enforces,
the measured value and a pass flag. ``run_all`` executes every check and is
what ``warmup-lab verify`` reports.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .config import RunConfig
from .diagnostics import SmoothnessSample, fit_quadratic, verify_constraints
from .errors import InvalidCoefficients
from .geometry import (
    EntrywiseMax,
    Euclidean,
    LayerwiseMax,
    Spectral,
    kappa,
    orthogonalize_exact,
    orthogonalize_ns,
    primal_norm,
)
from .harness import build_problem, run_fstar_ablation, run_sweep, run_training
from .optimizers import step_normalized_sgd
from .params import ParamSet, ShapeSpec, frobenius_norm
from .problems import batch_delta, interp_least_squares_make
from .schedulers import (
    AdaptiveWarmupScheduler,
    TheoreticalParams,
    cosine_decay,
    eta_practical,
    eta_thm1,
    eta_thm3,
    lambda_admissible,
    lambda_max,
    solve_coefficients,
    transition_point,
)

__all__ = ["CheckResult", "CHECKS", "run_all", "MLP_SWEEP_CONFIGS", "SWEEP_WARMUPS", "FSTAR_FRACTIONS"]


@dataclass
class CheckResult:
    name: str
    tolerance: str
    measured: float
    passed: bool
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: measured={self.measured:.6g} tol={self.tolerance} ({self.seconds:.2f}s) {self.detail}".rstrip()

    def to_dict(self) -> dict:
        return asdict(self)


def _timed(fn: Callable[[], CheckResult], budget: Optional[float] = None) -> CheckResult:
    start = time.perf_counter()
    res = fn()
    res.seconds = time.perf_counter() - start
    if budget is not None and res.seconds >= budget:
        res.passed = False
        res.detail = f"{res.detail} runtime {res.seconds:.2f}s exceeds {budget}s".strip()
    return res


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a)


# --------------------------------------------------------------------------
# 1-2: closed-form coefficients


def check_constraints(n_cases: int = 100, seed: int = 0) -> CheckResult:
    tol = 1e-9
    c = solve_coefficients(1e-3, 100.0, 8.0, 2.0)
    worst = max(_rel(c.K0, 88000.0), _rel(c.K1, -87000.0), _rel(c.K2, 22000.0))
    rng = np.random.default_rng(seed)
    done = 0
    sign_ok = True
    while done < n_cases:
        lr = 10 ** rng.uniform(-5, 0)
        div = 10 ** rng.uniform(0, 3)
        delta0 = 10 ** rng.uniform(-1, 2)
        dp = delta0 * rng.uniform(0.01, 0.99)
        try:
            c = solve_coefficients(lr, div, delta0, dp)
        except InvalidCoefficients:
            continue
        rep = verify_constraints(c, tol=tol)
        worst = max(worst, rep.peak_residual, rep.floor_residual, rep.critical_residual)
        if div > 1:
            # numerator of the derivative: K0 - K2 d^2, positive below the peak
            for d in (dp * (1 - 1e-6), dp * (1 + 1e-6)):
                slope = c.K0 - c.K2 * d * d
                sign_ok &= (slope > 0) == (d < dp)
        done += 1
    return CheckResult("closed_form_constraints", f"<= {tol:g} rel, < 1 s", worst,
                       worst <= tol and sign_ok, detail="" if sign_ok else "derivative sign")


def check_div_one() -> CheckResult:
    tol = 1e-12
    worst = 0.0
    for lr, delta0, dp in ((1e-3, 8.0, 2.0), (0.3, 1.0, 0.9), (5.0, 100.0, 0.5)):
        c = solve_coefficients(lr, 1.0, delta0, dp)
        grid = np.linspace(delta0 / 4096, delta0, 4096)
        worst = max(worst, float(np.max(np.abs(eta_practical(grid, c) - lr)) / lr))
    return CheckResult("div_one_constant", f"<= {tol:g} rel", worst, worst <= tol)


# --------------------------------------------------------------------------
# 3-4: geometry


def _witness(shapes: ShapeSpec, kind) -> ParamSet:
    layers = []
    for m, n in shapes:
        if isinstance(kind, EntrywiseMax):
            layers.append(np.ones((m, n)))
        elif isinstance(kind, Spectral):
            layers.append(np.eye(m, n))
        else:
            u = np.zeros((m, n))
            u[0, 0] = 1.0
            layers.append(u)
    return ParamSet(tuple(layers))


def check_kappa(n_cases: int = 50, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    formula_ok = True
    worst = 0.0
    for _ in range(n_cases):
        L = int(rng.integers(1, 6))
        shapes = ShapeSpec(tuple((int(rng.integers(1, 9)), int(rng.integers(1, 9))) for _ in range(L)))
        expected = {
            "sign": sum(m * n for m, n in shapes),
            "spectral": sum(min(m, n) for m, n in shapes),
            "euclidean": L,
        }
        for name, kind in (("sign", EntrywiseMax()), ("spectral", Spectral()), ("euclidean", Euclidean())):
            geom = LayerwiseMax((kind,) * L)
            k = kappa(shapes, geom)
            formula_ok &= k == expected[name]
            u = _witness(shapes, kind)
            worst = max(worst, abs(primal_norm(u, geom) - 1.0), abs(frobenius_norm(u) ** 2 - k) / k)
    return CheckResult("kappa_witness", "formula exact; witness <= 1e-9", worst,
                       formula_ok and worst <= 1e-9, detail="" if formula_ok else "formula mismatch")


def _conditioned(rng, m: int, n: int, cond: float) -> np.ndarray:
    k = min(m, n)
    Q, _ = np.linalg.qr(rng.standard_normal((m, k)))
    P, _ = np.linalg.qr(rng.standard_normal((n, k)))
    s = np.concatenate(([cond], np.exp(rng.uniform(0.0, math.log(cond), k - 2)), [1.0]))
    return (Q * s) @ P.T * rng.uniform(0.1, 10.0)


def check_newton_schulz(n_cases: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_cases):
        m, n = (8, 8) if i % 2 == 0 else (16, 4)
        G = _conditioned(rng, m, n, 100.0)
        err = np.linalg.norm(orthogonalize_ns(G, 5) - orthogonalize_exact(G))
        worst = max(worst, err / math.sqrt(min(m, n)))
    return CheckResult("newton_schulz_oracle", "<= 1e-2*sqrt(min(m,n)), < 2 s", worst, worst <= 1e-2)


# --------------------------------------------------------------------------
# 5-8: convergence guarantees


def check_gap_schedule_quadratic() -> CheckResult:
    cfg = RunConfig.from_dict({
        "problem": {"kind": "quadratic", "dim": 10, "seed": 0},
        "optimizer": {"kind": "normSGD"},
        "scheduler": {"kind": "thm1"},
        "run": {"steps": 1000},
    })
    problem = build_problem(cfg)
    trace = run_training(cfg)
    D = frobenius_norm(problem.x0 - problem.x_star)
    deltas = [r.delta for r in trace.rows] + [trace.final_loss]
    monotone = all(b <= a for a, b in zip(deltas, deltas[1:]))
    bound = 2.0 * D * D * 1.0 / len(trace.rows)
    in_ball = all(r.dist_to_opt <= D for r in trace.rows)
    ok = monotone and in_ball and deltas[-1] <= bound and trace.error is None
    return CheckResult("gap_schedule_quadratic", "Delta^T <= 2 D^2 K0 / T, < 1 s", deltas[-1] / bound, ok,
                       detail=f"monotone={monotone} in_ball={in_ball}")


def check_warmup_shape() -> CheckResult:
    p = TheoreticalParams(rho=2.0, K0=1e-4, K1=0.0, Krho=1e3, D=1.0)
    t = np.arange(1, 100_001)
    eta = np.array([eta_thm1(1.0 / k, p) for k in t])
    peak = int(t[np.argmax(eta)])
    expected = math.ceil(1.0 / transition_point(p.K0, p.Krho, p.rho))
    i = peak - 1
    inc = bool(np.all(np.diff(eta[1:i + 1]) > 0))
    dec = bool(np.all(np.diff(eta[i:]) < 0))
    ok = abs(peak - expected) <= 1 and inc and dec
    return CheckResult("warmup_decay_shape", f"|argmax - {expected}| <= 1", float(peak), ok,
                       detail=f"increasing={inc} decreasing={dec}")


def _coshsum_constants(problem, steps: int = 300) -> TheoreticalParams:
    """Fit the gap-to-smoothness curve from a short constant-step probe run."""
    x = problem.x0
    samples = []
    for _ in range(steps):
        delta, g = problem.value_and_grad(x)
        x_new = step_normalized_sgd(x, g, 0.02)
        ratio = frobenius_norm(problem.grad(x_new) - g) / frobenius_norm(x_new - x)
        samples.append(SmoothnessSample(delta, ratio))
        x = x_new
    K0, K1, K2 = fit_quadratic(samples)
    return TheoreticalParams(2.0, max(K0, 1e-12), max(K1, 0.0), max(K2, 0.0))


def check_weight_decay_coshsum() -> CheckResult:
    from .problems import coshsum_make

    problem = coshsum_make(10, seed=0)
    base = _coshsum_constants(problem)
    x0n = frobenius_norm(problem.x0)
    limit = 1.0 / max(x0n, 0.0, 1.0 / lambda_max(base))
    gate = (not lambda_admissible(1.01 * limit, base, x0n, 0.0)) and lambda_admissible(limit, base, x0n, 0.0)
    lam = limit
    cfg = RunConfig.from_dict({
        "problem": {"kind": "coshsum", "dim": 10, "seed": 0},
        "optimizer": {"kind": "normSGD", "weight_decay": lam},
        "scheduler": {"kind": "thm2", "constants": {"rho": 2.0, "K0": base.K0, "K1": base.K1, "Krho": base.Krho}},
        "run": {"steps": 1000},
    })
    trace = run_training(cfg)
    D = frobenius_norm(problem.x0 - problem.x_star)
    deltas = [r.delta for r in trace.rows] + [trace.final_loss]
    monotone = all(b <= a for a, b in zip(deltas, deltas[1:]))
    worst_dist = max(r.dist_to_opt for r in trace.rows) / D
    ok = gate and monotone and worst_dist <= 1.0 and trace.error is None and len(trace.rows) == 1000
    return CheckResult("weight_decay_coshsum", "gate exact; max ||x-x*|| / D <= 1", worst_dist, ok,
                       detail=f"gate={gate} monotone={monotone} lambda={lam:.4g} "
                              f"K=({base.K0:.3g},{base.K1:.3g},{base.Krho:.3g})")


def _stochastic_run(seed: int, steps: int) -> tuple[bool, float, float]:
    sobj = interp_least_squares_make(10, 20, seed=seed)
    x, xs = sobj.x0, sobj.x_star
    D = frobenius_norm(x - xs)
    p = sobj.known_constants
    dist = D
    monotone = True
    total = 0.0
    M = 0.0
    for t in range(steps):
        delta, g = batch_delta(sobj, x, seed, t)
        total += delta
        M = max(M, delta)
        if delta > 0:
            x = step_normalized_sgd(x, g, eta_thm3(delta, D, p))
        new = frobenius_norm(x - xs)
        monotone &= new <= dist * (1 + 1e-12)
        dist = new
    K_bar = p.smoothness(M)
    return monotone, total / steps, D * D * K_bar / math.sqrt(steps)


def check_stochastic_interpolation(seeds=range(5), steps: int = 10_000) -> CheckResult:
    worst = 0.0
    monotone = True
    for s in seeds:
        mono, mean, bound = _stochastic_run(s, steps)
        monotone &= mono
        worst = max(worst, mean / bound)
    return CheckResult("stochastic_interpolation", "mean Delta_xi / (D^2 K_bar / sqrt T) <= 1, < 5 s",
                       worst, monotone and worst <= 1.0, detail=f"distance_monotone={monotone}")


# --------------------------------------------------------------------------
# 9-10: scheduler state machine and fitting


def check_state_machine() -> CheckResult:
    lr, T = 1e-3, 10
    s = AdaptiveWarmupScheduler(T, 3.2, lr, div=100, kappa=1.0, delta_prime=2.0)
    got = [s.get_lr(11.2), s.get_lr(5.2)]
    warm_after = s.warmup_steps
    got += [s.get_lr(4.2), s.get_lr(6.0), s.get_lr(1.0)]
    want = [1e-5, lr] + [cosine_decay(k, T - 2, lr) for k in range(3)]
    worst = max(_rel(a, b) if b else abs(a) for a, b in zip(got, want))
    ok = (
        worst <= 1e-12
        and warm_after == 2
        and s.warmup_steps == 2
        and s.is_decay
        and s.decay.T_decay == T - 2
        and got[2] == lr
    )
    return CheckResult("adaptive_state_machine", "exact (1e-12 rel)", worst, ok)


def check_fit_recovery(seed: int = 0) -> CheckResult:
    truth = np.array([5.0, 2.0, 30.0])
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.01, 8.0, 500)
    r = (truth[0] + truth[1] * d + truth[2] * d * d) * (1.0 + 0.01 * rng.standard_normal(500))
    est = np.array(fit_quadratic([SmoothnessSample(a, b) for a, b in zip(d, r)], relative=True))
    worst = float(np.max(np.abs(est - truth) / truth))
    return CheckResult("fit_recovery", "<= 5% rel per coefficient", worst, worst <= 0.05,
                       detail="K=(%.4g, %.4g, %.4g)" % tuple(est))


# --------------------------------------------------------------------------
# 11-12: tiny-MLP sweep and target-loss ablation

SWEEP_WARMUPS = (0, 50, 200, 800)
FSTAR_FRACTIONS = (0.0, 0.05, 0.1, 0.2)


def _mlp_config(optimizer: dict) -> RunConfig:
    return RunConfig.from_dict({
        "problem": {"kind": "mlp", "hidden": 32, "n_data": 256, "seed": 0},
        "optimizer": optimizer,
        "scheduler": {"kind": "adaptive", "lr": 0.1, "div": 10, "f_star": 0.0},
        "run": {"steps": 1000, "seed": 0},
    })


MLP_SWEEP_CONFIGS = {
    "Lion": _mlp_config({"kind": "Lion", "beta1": 0.9, "beta2": 0.99}),
    "normSGD": _mlp_config({"kind": "normSGD", "beta1": 0.9}),
}


def check_mlp_sweep() -> CheckResult:
    worst = 0.0
    parts = []
    for name, cfg in MLP_SWEEP_CONFIGS.items():
        rows = run_sweep(cfg, SWEEP_WARMUPS)
        best = min(r.final_loss for r in rows if r.schedule == "manual")
        ratio = rows[-1].final_loss / best
        worst = max(worst, ratio)
        parts.append(f"{name}={ratio:.3f}")
    return CheckResult("mlp_warmup_sweep", "adaptive <= 1.10 x best manual, < 60 s", worst,
                       worst <= 1.10, detail=" ".join(parts))


def check_fstar_ablation() -> CheckResult:
    worst = 0.0
    parts = []
    init_error_recorded = True
    for name, cfg in MLP_SWEEP_CONFIGS.items():
        problem = build_problem(cfg)
        delta0 = problem.value(problem.x0) - problem.f_star
        values = [problem.f_star + f * delta0 for f in FSTAR_FRACTIONS] + [problem.f_star + 1.5 * delta0]
        rows = run_fstar_ablation(cfg, values)
        losses = np.array([r.final_loss for r in rows[:-1]])
        spread = float(losses.max() / losses.min() - 1.0)
        worst = max(worst, spread)
        init_error_recorded &= rows[-1].error is not None and "SchedulerInitError" in rows[-1].error
        parts.append(f"{name}={spread:.3f}")
    return CheckResult("fstar_ablation", "max/min - 1 <= 0.20; init error recorded", worst,
                       worst <= 0.20 and init_error_recorded,
                       detail=" ".join(parts) + f" init_error_row={init_error_recorded}")


CHECKS: dict[str, tuple[Callable[[], CheckResult], Optional[float]]] = {
    "closed_form_constraints": (check_constraints, 1.0),
    "div_one_constant": (check_div_one, None),
    "kappa_witness": (check_kappa, None),
    "newton_schulz_oracle": (check_newton_schulz, 2.0),
    "gap_schedule_quadratic": (check_gap_schedule_quadratic, 1.0),
    "warmup_decay_shape": (check_warmup_shape, None),
    "weight_decay_coshsum": (check_weight_decay_coshsum, None),
    "stochastic_interpolation": (check_stochastic_interpolation, 5.0),
    "adaptive_state_machine": (check_state_machine, None),
    "fit_recovery": (check_fit_recovery, None),
    "mlp_warmup_sweep": (check_mlp_sweep, 60.0),
    "fstar_ablation": (check_fstar_ablation, None),
}


def run_check(name: str) -> CheckResult:
    fn, budget = CHECKS[name]
    return _timed(fn, budget)


def run_all(names=None) -> list[CheckResult]:
    return [run_check(n) for n in (names or CHECKS)]
