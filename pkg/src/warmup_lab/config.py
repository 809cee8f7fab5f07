"""JSON run configuration.

A config is one JSON object with four sections::

    {
      "problem":   {"kind": "mlp", "hidden": 32, "n_data": 256, "seed": 0},
      "optimizer": {"kind": "Lion", "beta1": 0.9, "beta2": 0.99},
      "scheduler": {"kind": "adaptive", "lr": 1e-3, "div": 100, "f_star": 0.0},
      "run":       {"steps": 1000, "seed": 0}
    }

Unknown keys anywhere are rejected so that typos in sweep scripts fail loudly.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

from .errors import ConfigError

__all__ = [
    "ProblemConfig",
    "OptimizerSection",
    "SchedulerSection",
    "RunSection",
    "RunConfig",
    "load_config",
]

PROBLEM_KINDS = ("quadratic", "coshsum", "interp_ls", "mlp")
SCHEDULER_KINDS = ("adaptive", "manual", "thm1", "thm1_frozen", "thm2", "thm3", "constant")


def _build(cls, data: Any, section: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} section: {exc}") from exc


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "quadratic"
    dim: int = 10
    hidden: int = 32
    n_samples: int = 10
    n_data: int = 256
    d_in: int = 8
    batch_size: int = 1
    scale: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"problem.kind must be one of {PROBLEM_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class OptimizerSection:
    kind: str = "normSGD"
    beta1: float = 0.0
    beta2: float = 0.0
    weight_decay: float = 0.0
    clip: Optional[float] = None
    geometry: Optional[Union[str, list]] = None


@dataclass(frozen=True)
class Constants:
    rho: float = 2.0
    K0: float = 0.0
    K1: float = 0.0
    Krho: float = 0.0


@dataclass(frozen=True)
class SchedulerSection:
    kind: str = "adaptive"
    lr: Optional[float] = None
    div: float = 100.0
    f_star: Optional[float] = None
    sigma_F2: float = 1e3
    total_steps: Optional[int] = None
    warmup_steps: int = 0
    decay: str = "cosine"
    n_candidates: int = 1000
    delta_prime: Optional[float] = None
    smooth_beta: Optional[float] = None
    constants: Optional[Constants] = None
    D: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SCHEDULER_KINDS:
            raise ValueError(f"scheduler.kind must be one of {SCHEDULER_KINDS}, got {self.kind!r}")
        if self.decay not in ("cosine", "linear"):
            raise ValueError("scheduler.decay must be 'cosine' or 'linear'")
        if self.kind in ("adaptive", "manual", "constant") and (self.lr is None or self.lr <= 0):
            raise ValueError(f"scheduler.lr > 0 is required for kind {self.kind!r}")
        if self.div < 1:
            raise ValueError("scheduler.div must be >= 1")
        if isinstance(self.constants, dict):
            object.__setattr__(self, "constants", _build(Constants, self.constants, "scheduler.constants"))


@dataclass(frozen=True)
class RunSection:
    steps: int = 100
    eval_every: int = 1
    seed: int = 0
    batch_indexing: str = "random"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("run.steps must be >= 1")
        if self.eval_every < 1:
            raise ValueError("run.eval_every must be >= 1")
        if self.batch_indexing not in ("random", "cyclic"):
            raise ValueError("run.batch_indexing must be 'random' or 'cyclic'")


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    scheduler: SchedulerSection = field(default_factory=lambda: SchedulerSection(lr=1e-2))
    run: RunSection = field(default_factory=RunSection)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - {"problem", "optimizer", "scheduler", "run"})
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        return cls(
            problem=_build(ProblemConfig, data.get("problem"), "problem"),
            optimizer=_build(OptimizerSection, data.get("optimizer"), "optimizer"),
            scheduler=_build(SchedulerSection, data.get("scheduler"), "scheduler"),
            run=_build(RunSection, data.get("run"), "run"),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_scheduler(self, **changes) -> "RunConfig":
        try:
            return replace(self, scheduler=replace(self.scheduler, **changes))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return RunConfig.from_dict(data)
