"""Command-line wrapper: parse flags, run the experiment, map errors to
exit codes (0 success, 2 config error, 3 infeasible, 4 numerical failure).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import parse_config
from .errors import ConfigError, DomainError, InfeasibleError, NumericalError
from .experiments import run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensemi",
        description=(
            "Sensing mutual information experiments: closed-form large-frame "
            "metrics, Monte-Carlo cross-checks, and precoder design."
        ),
    )
    parser.add_argument(
        "--config", required=True, help="path to a key = value config file"
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="override the config seed"
    )
    parser.add_argument(
        "--threads", type=int, default=1, help="worker-pool size (default 1)"
    )
    parser.add_argument(
        "--mc-trials", type=int, default=None, help="override mc_trials"
    )
    parser.add_argument("--output", default=None, help="override the output path")
    parser.add_argument(
        "--format", choices=("csv", "json"), default=None, help="override the format"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("config error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = parse_config(
            text,
            seed=args.seed,
            mc_trials=args.mc_trials,
            output=args.output,
            fmt=args.format,
        )
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out_path, manifest_path = run(spec, threads=args.threads)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalError, DomainError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(out_path)
    print(manifest_path)
    return EXIT_OK


def entry() -> None:
    raise SystemExit(main())
