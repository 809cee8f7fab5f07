"""Training loops, warm-up sweeps and target-loss ablations driven by RunConfig."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import RunConfig
from .diagnostics import SmoothnessSample, smoothness_ratio
from .errors import ConfigError, NumericalError, WarmupLabError
from .geometry import Geometry, dual_norm, geometry_from_config, geometry_name, kappa, primal_norm
from .optimizers import OptimizerConfig, OptimizerState, optimizer_step
from .params import ParamSet, frobenius_norm
from .problems import (
    InterpLeastSquares,
    coshsum_make,
    interp_least_squares_make,
    mlp_make,
    quadratic_make,
)
from .schedulers import (
    AdaptiveWarmupScheduler,
    ConstantScheduler,
    ManualWarmupScheduler,
    TheoreticalParams,
    TheoreticalScheduler,
    lambda_admissible,
)

__all__ = [
    "DIVERGENCE_LOSS",
    "TraceRow",
    "RunTrace",
    "SweepRow",
    "AblationRow",
    "build_problem",
    "build_optimizer",
    "build_scheduler",
    "run_training",
    "run_sweep",
    "run_fstar_ablation",
    "schedule_preview",
    "write_csv",
    "fmt",
]

DIVERGENCE_LOSS = 1e6


def fmt(v) -> str:
    """Shortest round-trip text for CSV cells."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path_or_buf, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    own = isinstance(path_or_buf, (str, os.PathLike))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    finally:
        if own:
            fh.close()


@dataclass
class TraceRow:
    step: int
    loss: float
    delta: float
    lr: float
    dual_grad_norm: float
    dist_to_opt: Optional[float]
    phase: str
    ratio: Optional[float] = None


TRACE_COLUMNS = ("step", "loss", "delta", "lr", "dual_grad_norm", "dist_to_opt", "phase")


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)
    header: dict = field(default_factory=dict)
    final_loss: float = math.nan
    diverged: bool = False
    error: Optional[str] = None
    error_step: Optional[int] = None
    final_x: Optional[ParamSet] = None
    eval_every: int = 1

    @property
    def warmup_steps(self) -> int:
        return int(self.header.get("warmup_steps", 0))

    def to_csv(self, path_or_buf) -> None:
        """Write every ``eval_every``-th row plus the last one."""
        last = len(self.rows) - 1
        kept = (r for i, r in enumerate(self.rows) if i % self.eval_every == 0 or i == last)
        write_csv(path_or_buf, TRACE_COLUMNS, ([getattr(r, c) for c in TRACE_COLUMNS] for r in kept))

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def summary(self) -> dict:
        out = dict(self.header)
        out.update(final_loss=self.final_loss, diverged=self.diverged,
                   error=self.error, error_step=self.error_step, steps_run=len(self.rows))
        return out

    def smoothness_samples(self) -> list[SmoothnessSample]:
        return [SmoothnessSample(r.delta, r.ratio) for r in self.rows if r.ratio is not None]


# --------------------------------------------------------------------------
# builders


def build_problem(cfg: RunConfig):
    p = cfg.problem
    if p.kind == "quadratic":
        from .params import ShapeSpec
        shapes = ShapeSpec(((p.dim, 1),))
        rng = np.random.default_rng(p.seed)
        x_star = ParamSet((rng.standard_normal((p.dim, 1)),))
        return quadratic_make(shapes, x_star, seed=p.seed + 1)
    if p.kind == "coshsum":
        return coshsum_make(p.dim, seed=p.seed, scale=p.scale)
    if p.kind == "interp_ls":
        return interp_least_squares_make(p.n_samples, p.dim, seed=p.seed, batch_size=p.batch_size)
    return mlp_make(p.hidden, p.n_data, seed=p.seed, d_in=p.d_in)


def build_optimizer(cfg: RunConfig, n_layers: int) -> OptimizerConfig:
    o = cfg.optimizer
    try:
        geom = None if o.geometry is None else geometry_from_config(o.geometry, n_layers)
        return OptimizerConfig(o.kind, o.beta1, o.beta2, o.weight_decay, geom, o.clip)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid optimizer section: {exc}") from exc


def _theoretical_params(cfg: RunConfig, problem, geom: Geometry) -> TheoreticalParams:
    s = cfg.scheduler
    if s.constants is not None:
        c = s.constants
        base = TheoreticalParams(c.rho, c.K0, c.K1, c.Krho)
    elif getattr(problem, "known_constants", None) is not None:
        base = problem.known_constants
    else:
        raise ConfigError(f"scheduler.kind={s.kind!r} needs scheduler.constants for this problem")
    D = s.D
    if D is None and problem.x_star is not None:
        D = primal_norm(problem.x0 - problem.x_star, geom)
    lam = cfg.optimizer.weight_decay if s.kind == "thm2" else None
    return TheoreticalParams(base.rho, base.K0, base.K1, base.Krho, D=D, lam=lam)


def build_scheduler(cfg: RunConfig, problem, geom: Geometry):
    s = cfg.scheduler
    total = s.total_steps if s.total_steps is not None else cfg.run.steps
    f_star = s.f_star if s.f_star is not None else problem.f_star
    if s.kind == "adaptive":
        return AdaptiveWarmupScheduler(
            total, f_star, s.lr, s.div, kappa(problem.shapes, geom), s.sigma_F2,
            s.decay, s.n_candidates, s.delta_prime, s.smooth_beta,
        )
    if s.kind == "manual":
        return ManualWarmupScheduler(total, s.warmup_steps, s.lr, s.div, s.decay)
    if s.kind == "constant":
        return ConstantScheduler(s.lr)

    params = _theoretical_params(cfg, problem, geom)
    if s.kind == "thm2":
        lam = cfg.optimizer.weight_decay
        if lam <= 0:
            raise ConfigError("scheduler.kind='thm2' requires optimizer.weight_decay > 0")
        x_star_norm = 0.0 if problem.x_star is None else primal_norm(problem.x_star, geom)
        if not lambda_admissible(lam, params, primal_norm(problem.x0, geom), x_star_norm):
            raise ConfigError(f"weight_decay={lam} is not admissible for these constants")
    elif params.D is None:
        raise ConfigError(f"scheduler.kind={s.kind!r} needs scheduler.D when x_star is unknown")
    # per-batch infimum is 0 for the interpolated problems
    return TheoreticalScheduler(s.kind, params, f_star)


# --------------------------------------------------------------------------
# runs


def _batch_for(problem, cfg: RunConfig, t: int):
    if not isinstance(problem, InterpLeastSquares):
        return problem
    if cfg.run.batch_indexing == "cyclic":
        from .problems import LeastSquares
        rows = (np.arange(problem.batch_size) + t * problem.batch_size) % problem.n_samples
        return LeastSquares(problem.A[rows], problem.b[rows], problem.x_star)
    return problem.sample(cfg.run.seed, t)


def run_training(cfg: RunConfig, diagnose: bool = False) -> RunTrace:
    """Run ``cfg.run.steps`` optimizer steps and record one row per step.

    Each row holds the pre-step loss and the learning rate used for that step.
    The final loss is taken on the full objective after the last step. With
    ``diagnose`` the smoothness ratio between consecutive iterates is also
    measured, re-using the step's batch for the second gradient.
    """
    problem = build_problem(cfg)
    full = problem.full_objective if isinstance(problem, InterpLeastSquares) else problem
    x = problem.x0
    opt = build_optimizer(cfg, len(x))
    geom = opt.resolve_geometry(len(x))
    scheduler = build_scheduler(cfg, problem, geom)
    f_star = getattr(scheduler, "f_star", problem.f_star)
    state = OptimizerState.zeros_like(x)
    trace = RunTrace(eval_every=cfg.run.eval_every, header={
        "config_hash": cfg.config_hash(),
        "seed": cfg.run.seed,
        "problem_seed": cfg.problem.seed,
        "geometry": geometry_name(geom),
        "kappa": kappa(problem.shapes, geom),
    })

    for t in range(cfg.run.steps):
        batch = _batch_for(problem, cfg, t)
        loss, g = batch.value_and_grad(x)
        if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
            trace.diverged = True
            break
        try:
            lr = scheduler.get_lr(loss)
            x_new, state = optimizer_step(opt, state, x, g, lr)
        except NumericalError:
            trace.diverged = True
            break
        except WarmupLabError as exc:
            trace.error = f"{type(exc).__name__}: {exc}"
            trace.error_step = t
            break
        ratio = None
        if diagnose and frobenius_norm(x_new - x) > 0:
            ratio = smoothness_ratio(batch, x, x_new, geom)
        dist = None if problem.x_star is None else frobenius_norm(x - problem.x_star)
        trace.rows.append(TraceRow(
            t, loss, loss - f_star, lr, dual_norm(g, geom), dist, scheduler.phase, ratio,
        ))
        x = x_new

    trace.header.update(scheduler.header())
    trace.final_x = x
    if trace.diverged:
        trace.final_loss = math.inf
    else:
        final = full.value(x)
        trace.final_loss = final if math.isfinite(final) else math.inf
        if not math.isfinite(final) or final > DIVERGENCE_LOSS:
            trace.diverged = True
            trace.final_loss = math.inf
    return trace


def _threads(n_jobs: int) -> int:
    cap = os.environ.get("WARMUPLAB_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def _map(fn, items):
    items = list(items)
    workers = _threads(len(items))
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class SweepRow:
    schedule: str
    warmup_steps: int
    final_loss: float
    diverged: bool
    error: Optional[str] = None


SWEEP_COLUMNS = ("schedule", "warmup_steps", "final_loss", "diverged", "error")


def _outcome(trace: RunTrace) -> tuple[float, bool]:
    if trace.error is not None:
        return math.inf, False
    return trace.final_loss, trace.diverged


def run_sweep(cfg: RunConfig, warmup_lengths: Sequence[int]) -> list[SweepRow]:
    """Manual warm-up rows, one per length, followed by one adaptive row."""

    def job(spec):
        kind, length = spec
        if kind == "manual":
            trace = run_training(cfg.with_scheduler(kind="manual", warmup_steps=int(length)))
        else:
            trace = run_training(cfg.with_scheduler(kind="adaptive"))
        loss, diverged = _outcome(trace)
        return SweepRow(kind, trace.warmup_steps, loss, diverged, trace.error)

    specs = [("manual", w) for w in warmup_lengths] + [("adaptive", None)]
    return _map(job, specs)


@dataclass
class AblationRow:
    f_star: float
    final_loss: float
    warmup_steps: int
    delta_prime: Optional[float]
    diverged: bool
    error: Optional[str] = None


ABLATION_COLUMNS = ("f_star", "final_loss", "warmup_steps", "delta_prime", "diverged", "error")


def run_fstar_ablation(cfg: RunConfig, fstar_values: Sequence[float]) -> list[AblationRow]:
    """One adaptive run per target-loss estimate."""

    def job(f_star):
        trace = run_training(cfg.with_scheduler(kind="adaptive", f_star=float(f_star)))
        loss, diverged = _outcome(trace)
        return AblationRow(float(f_star), loss, trace.warmup_steps,
                           trace.header.get("delta_prime"), diverged, trace.error)

    return _map(job, fstar_values)


PREVIEW_COLUMNS = ("step", "delta", "lr", "phase")


def schedule_preview(cfg: RunConfig, delta0: Optional[float] = None,
                     trajectory: str = "linear") -> list[tuple[int, float, float, str]]:
    """Learning rates the configured scheduler emits along a synthetic gap path.

    ``delta0`` defaults to the initial gap of the configured problem. The gap
    follows ``delta0 * (1 - t/T)`` (``linear``) or ``delta0 / (1 + t)``
    (``inverse``) for ``T = run.steps``.
    """
    problem = build_problem(cfg)
    x0 = problem.x0
    geom = build_optimizer(cfg, len(x0)).resolve_geometry(len(x0))
    scheduler = build_scheduler(cfg, problem, geom)
    f_star = getattr(scheduler, "f_star", problem.f_star)
    full = problem.full_objective if isinstance(problem, InterpLeastSquares) else problem
    if delta0 is None:
        delta0 = full.value(x0) - f_star
    T = cfg.run.steps
    out = []
    for t in range(T):
        if trajectory == "linear":
            delta = delta0 * (1.0 - t / T)
        elif trajectory == "inverse":
            delta = delta0 / (1.0 + t)
        else:
            raise ValueError(f"unknown trajectory {trajectory!r}")
        lr = scheduler.get_lr(f_star + delta)
        out.append((t, delta, lr, scheduler.phase))
    return out
