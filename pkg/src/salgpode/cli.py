"""Command line harness.

Subcommands:
  run          execute the SAL or random loop for every configured seed
  evaluate     recompute metrics for a saved run state
  aggregate    summarize metrics CSVs (mean +- 2 std per budget)
  list-systems print the registered benchmark systems

Exit codes: 0 success, 2 configuration/schema error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

import numpy as np

from .acquisition import SamplingConfig
from .errors import (
    ConfigError,
    DivergenceError,
    NumericalDegeneracyError,
    SalGpodeError,
    SchemaError,
    StepBudgetError,
    TrainingError,
)
from . import harness
from .systems import SYSTEMS, get_system

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser():
    parser = argparse.ArgumentParser(prog="salgpode",
                                     description="Safe active learning for GP-ODE models")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the measure-train-plan loop")
    p_run.add_argument("--config", required=True, help="YAML experiment config")
    p_run.add_argument("--method", choices=["sal", "random"], default="sal")
    p_run.add_argument("--acquisition", choices=["entropy", "covariance"],
                       help="override the config's acquisition function")
    p_run.add_argument("--resume", action="store_true",
                       help="continue interrupted runs from their state files")

    p_eval = sub.add_parser("evaluate", help="recompute metrics for a run state")
    p_eval.add_argument("--checkpoint", required=True, help="state.json of a run")
    p_eval.add_argument("--config", required=True, help="YAML experiment config")

    p_agg = sub.add_parser("aggregate", help="summarize metrics CSVs")
    p_agg.add_argument("--input", required=True,
                       help="metrics CSV file or directory of CSVs")
    p_agg.add_argument("--output", required=True, help="summary CSV path")

    sub.add_parser("list-systems", help="print registered benchmark systems")
    return parser


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    if args.acquisition:
        config.acquisition = args.acquisition
    records, combined = harness.run_experiment(config, args.method, resume=args.resume)
    print(f"wrote {len(records)} metric records to {combined}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    config = harness.load_config(args.config)
    state = harness.load_run_state(args.checkpoint)
    system = get_system(config.system, **config.system_overrides)
    seed = int(state["seed"])
    val = harness.build_validation_set(system, config, seed)
    mc = config.metrics
    nll = harness.validation_nll(
        state["model"], val, mc.k_metrics,
        np.random.default_rng([seed, 99, 0]),
        n_fourier=mc.n_fourier, substeps=mc.substeps,
    )
    grid = harness.uniform_grid(system.candidate_box, mc.f1_grid)
    f1 = harness.f1_safe_set(
        state["model"], system, grid, config.planner.delta,
        SamplingConfig(K=mc.k_metrics, n_fourier=mc.n_fourier, substeps=mc.substeps),
        np.random.default_rng([seed, 99, 1]),
    )
    print(f"seed={seed} method={state['method']} episodes={len(state['episodes'])} "
          f"nll={nll:.6g} f1={f1:.4f}")
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    if os.path.isdir(args.input):
        paths = sorted(glob.glob(os.path.join(args.input, "*.csv")))
    else:
        paths = [args.input]
    if not paths:
        raise ConfigError(f"no CSV files found under {args.input}")
    rows = []
    for path in paths:
        rows.extend(harness.load_metrics_rows(path))
    summary = harness.aggregate(rows)
    harness.save_aggregate(summary, args.output)
    print(f"wrote {len(summary)} summary rows to {args.output}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, which matches our config-error code
        return int(exc.code) if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "aggregate":
            return _cmd_aggregate(args)
        if args.command == "list-systems":
            for name in sorted(SYSTEMS):
                print(name)
            return EXIT_OK
        return EXIT_CONFIG
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalDegeneracyError, TrainingError, DivergenceError,
            StepBudgetError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SalGpodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
