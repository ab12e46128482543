"""Batch command line: run one experiment described by a JSON config.

Usage: stiefel-sync <config.json> [--mode M] [--trials K] [--seed S]
                         [--threads T] [--out-dir D]

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 certificate
failure in 'certify' mode.
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    GraphError,
    IntegrationError,
    RetractionError,
)
from .harness import MODES, CertificationRun, emit_results, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stiefel-sync",
        description=(
            "Simulate and certify consensus gradient flows on the manifold of "
            "orthonormal frames."
        ),
    )
    parser.add_argument("config", help="path to the experiment config JSON")
    parser.add_argument("--mode", choices=MODES, help="override the config mode")
    parser.add_argument("--trials", type=int, help="override the trial count")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--threads", type=int, help="worker pool size")
    parser.add_argument("--out-dir", dest="out_dir", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(
            args.config,
            mode=args.mode,
            trials=args.trials,
            seed=args.seed,
            threads=args.threads,
            out_dir=args.out_dir,
        )
    except (ConfigError, GraphError, DimensionError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        run = run_experiment(config)
    except (ConfigError, GraphError, DimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationError, RetractionError, ConvergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    paths = emit_results(run)
    print(f"wrote {paths['summary_json']}")
    if isinstance(run, CertificationRun) and config.mode == "certify":
        if not run.report["passed"]:
            failed = [k for k, ok in run.report["checks"].items() if not ok]
            print(f"certificate failed: {failed}", file=sys.stderr)
            return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
