"""``warmup-lab`` command line entry point."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .config import load_config
from .diagnostics import fit_summary
from .errors import FitError, WarmupLabError
from .harness import (
    ABLATION_COLUMNS,
    PREVIEW_COLUMNS,
    SWEEP_COLUMNS,
    run_fstar_ablation,
    run_sweep,
    run_training,
    schedule_preview,
    write_csv,
)
from .verify import CHECKS, run_check


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _finite(obj):
    """Replace inf/nan by strings so the output stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dump(data, path=None) -> None:
    text = json.dumps(_finite(data), indent=2, sort_keys=True, allow_nan=False)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _sidecar(out: str, suffix: str) -> str:
    return f"{out}.{suffix}.json"


def cmd_preview(args) -> int:
    cfg = load_config(args.config)
    rows = schedule_preview(cfg, args.delta0, args.trajectory)
    write_csv(args.out, PREVIEW_COLUMNS, rows)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    trace = run_training(cfg)
    trace.to_csv(args.out)
    summary = trace.summary()
    _dump(summary, _sidecar(args.out, "meta"))
    _dump(summary)
    return 0 if trace.error is None else 1


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    rows = run_sweep(cfg, _ints(args.warmups))
    write_csv(args.out, SWEEP_COLUMNS,
              ((r.schedule, r.warmup_steps, r.final_loss, r.diverged, r.error) for r in rows))
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    rows = run_fstar_ablation(cfg, _floats(args.values))
    write_csv(args.out, ABLATION_COLUMNS,
              ((r.f_star, r.final_loss, r.warmup_steps, r.delta_prime, r.diverged, r.error) for r in rows))
    return 0


def cmd_diagnose(args) -> int:
    cfg = load_config(args.config)
    trace = run_training(cfg, diagnose=True)
    geom = trace.header["geometry"]
    write_csv(args.out, ("step", "delta", "ratio", "geometry"),
              ((r.step, r.delta, r.ratio, geom) for r in trace.rows if r.ratio is not None))
    try:
        fit = fit_summary(trace.smoothness_samples())
    except FitError as exc:
        fit = {"error": str(exc), "n_samples": len(trace.smoothness_samples())}
    _dump(fit, args.fit or _sidecar(args.out, "fit"))
    _dump(fit)
    return 0


def cmd_verify(args) -> int:
    names = args.only.split(",") if args.only else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        print(f"unknown check(s): {', '.join(unknown)}", file=sys.stderr)
        return 2
    results = []
    for name in names:
        res = run_check(name)
        print(res.line(), flush=True)
        results.append(res)
    passed = all(r.passed for r in results)
    if args.json:
        _dump({"passed": passed, "checks": [r.to_dict() for r in results]}, args.json)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warmup-lab", description="Gap-driven warm-up schedules and LMO optimizers.")
    sub = parser.add_subparsers(dest="command", required=True)

    sched = sub.add_parser("schedule", help="inspect a scheduler without training")
    sched_sub = sched.add_subparsers(dest="action", required=True)
    p = sched_sub.add_parser("preview", help="learning rates along a synthetic gap trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delta0", type=float, default=None, help="initial gap (default: from the problem)")
    p.add_argument("--trajectory", choices=("linear", "inverse"), default="linear")
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("train", help="run one training job and write its trace")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="manual warm-up lengths plus one adaptive run")
    p.add_argument("--config", required=True)
    p.add_argument("--warmups", required=True, help="comma separated warm-up lengths")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate-fstar", help="adaptive runs over target-loss estimates")
    p.add_argument("--config", required=True)
    p.add_argument("--values", required=True, help="comma separated f_star values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("diagnose", help="record smoothness ratios and fit K0 + K1 d + K2 d^2")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fit", default=None, help="fit summary JSON path (default: <out>.fit.json)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("verify", help="run the built-in check suite")
    p.add_argument("--json", default=None, help="write a machine-readable report here")
    p.add_argument("--only", default=None, help="comma separated subset of check names")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WarmupLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
