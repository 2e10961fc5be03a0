"""Command-line experiment runner.

One subcommand per scenario; each takes an optional config file (INI
format, see `antmuscle.config`) plus --out/--seed overrides and writes a
result bundle (CSV files + summary.json). Exit codes: 0 success,
1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import (
    SCENARIOS,
    default_config_text,
    load_config,
    parse_config,
)
from .errors import (
    AntmuscleError,
    ConfigurationError,
    FeasibilityError,
    TrajectoryParseError,
    TrajectorySchemaError,
)
from .experiments import run_scenario

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_VALIDATION_ERRORS = (
    ConfigurationError,
    FeasibilityError,
    TrajectoryParseError,
    TrajectorySchemaError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="antmuscle",
        description=(
            "Experiments on an antagonistic artificial-muscle joint: "
            "identification, decoupling map, controller comparison, "
            "contact matrix, tick benchmark."
        ),
    )
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", help="INI config file (defaults used otherwise)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument(
            "--print-config",
            action="store_true",
            help="print the effective default config and exit",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.print_config:
            print(default_config_text(args.scenario))
            return EXIT_OK
        if args.config:
            cfg = load_config(args.config)
            if cfg.scenario != args.scenario:
                raise ConfigurationError(
                    f"config declares scenario {cfg.scenario!r} but the "
                    f"{args.scenario!r} subcommand was invoked"
                )
        else:
            cfg = parse_config(default_config_text(args.scenario))
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out=args.out)
    except _VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        summary = run_scenario(cfg)
    except _VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except AntmuscleError as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME

    checks = summary.get("checks", {})
    for name, ok in sorted(checks.items()):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(json.dumps({k: v for k, v in summary.items() if k != "checks"},
                     indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
