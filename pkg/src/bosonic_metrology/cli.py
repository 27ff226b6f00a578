"""Command-line entry point."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import recipes
from .bayes import FitError as ModelFitError, PriorEscapeError
from .config import ConfigError, RunConfig
from .fockspace import TruncationError
from .lindblad import StepSizeError
from .metrology import FitError, IllConditionedFit

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 1, 2, 3
THREADS_ENV = "BOSONIC_METROLOGY_THREADS"

COMMANDS = {
    "probe-stats": recipes.cmd_probe_stats,
    "sweep": recipes.cmd_sweep,
    "fisher": recipes.cmd_fisher,
    "precision": recipes.cmd_precision,
    "gain": recipes.cmd_gain,
    "weights": recipes.cmd_weights,
    "budget": recipes.cmd_budget,
    "bayes-phase": recipes.cmd_bayes_phase,
    "bayes-chi": recipes.cmd_bayes_chi,
}

NUMERIC_ERRORS = (TruncationError, FitError, ModelFitError, IllConditionedFit, StepSizeError, PriorEscapeError,
                  FloatingPointError, np.linalg.LinAlgError)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV})")
    common.add_argument("--out", metavar="DIR", help="output directory")

    parser = argparse.ArgumentParser(prog="bosonic-metrology",
                                     description="Bosonic-probe phase and amplitude sensing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    rep = sub.add_parser("reproduce", parents=[common], help="regenerate a figure's data bundle")
    rep.add_argument("--figure", required=True, metavar="ID", help=" | ".join(recipes.FIGURES))
    return parser


def _threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None


def resolve(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = replace(cfg, seed=args.seed)
    threads = _threads(args.threads)
    if threads is not None:
        if threads < 1:
            raise ConfigError("thread count must be positive")
        cfg = replace(cfg, threads=threads)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def write_outputs(out_dir: str, files: dict, resolved: dict) -> None:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    for name, text in {**files, "resolved_config.json": json.dumps(resolved, indent=2, sort_keys=True) + "\n"}.items():
        with open(path / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        resolved = cfg.resolved()
        if args.command == "reproduce":
            files, summary = recipes.reproduce(cfg, args.figure)
        else:
            files, summary = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_outputs(cfg.output_dir, files, resolved)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(recipes.dump_json(summary), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
