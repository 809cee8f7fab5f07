"""Gap-driven learning-rate warm-up, LMO optimizers and the problems used to check them."""
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    DegenerateGradient,
    DegenerateInput,
    FitError,
    InvalidCoefficients,
    InvalidStep,
    NumericalError,
    SchedulerInitError,
    ShapeMismatch,
    WarmupLabError,
)
from .geometry import (
    EntrywiseMax,
    Euclidean,
    LayerwiseMax,
    Spectral,
    dual_norm,
    kappa,
    lmo,
    orthogonalize_exact,
    orthogonalize_ns,
    primal_norm,
)
from .harness import RunTrace, run_fstar_ablation, run_sweep, run_training
from .optimizers import OptimizerConfig, OptimizerState, optimizer_step
from .params import ParamSet, ShapeSpec, add_scaled, frobenius_norm, inner_product, singular_values
from .schedulers import (
    AdaptiveWarmupScheduler,
    CoefficientSet,
    TheoreticalParams,
    eta_practical,
    select_delta_prime,
    solve_coefficients,
)


__all__ = [
    "RunConfig",
    "load_config",
    "ConfigError",
    "DegenerateGradient",
    "DegenerateInput",
    "FitError",
    "InvalidCoefficients",
    "InvalidStep",
    "NumericalError",
    "SchedulerInitError",
    "ShapeMismatch",
    "WarmupLabError",
    "EntrywiseMax",
    "Euclidean",
    "LayerwiseMax",
    "Spectral",
    "dual_norm",
    "kappa",
    "lmo",
    "orthogonalize_exact",
    "orthogonalize_ns",
    "primal_norm",
    "RunTrace",
    "run_fstar_ablation",
    "run_sweep",
    "run_training",
    "OptimizerConfig",
    "OptimizerState",
    "optimizer_step",
    "ParamSet",
    "ShapeSpec",
    "add_scaled",
    "frobenius_norm",
    "inner_product",
    "singular_values",
    "AdaptiveWarmupScheduler",
    "CoefficientSet",
    "TheoreticalParams",
    "eta_practical",
    "select_delta_prime",
    "solve_coefficients",
]

__version__ = "0.1.0"
