"""Command-line entry point: ``dephased-bath {simulate,sweep,reproduce,schema,plot}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import SCHEMA, load_config
from .exceptions import ConfigError, NumericalError

EXIT_OK = 0
EXIT_CHECKS = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

JOBS_ENV = "DEPHASED_BATH_JOBS"

log = logging.getLogger("dephased_bath")


def default_jobs() -> int:
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{JOBS_ENV} must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{JOBS_ENV} must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def _positive_int(s: str) -> int:
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dephased-bath",
                                description="Dephased spin bath simulations.")
    p.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    p.add_argument("--jobs", type=_positive_int, default=None,
                   help=f"parallel workers (default: ${JOBS_ENV} or CPU count)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("simulate", help="run every engine in a config")
    s.add_argument("-c", "--config", required=True, type=Path)
    s.add_argument("--out", type=Path, default=None, help="override outputs.csv_dir")

    s = sub.add_parser("sweep", help="simulate over values of one numeric config field")
    s.add_argument("-c", "--config", required=True, type=Path)
    s.add_argument("--axis", required=True, help="dotted path, e.g. dephasing.alpha")
    s.add_argument("--values", required=True, nargs="+", type=float)
    s.add_argument("--out", type=Path, default=None, help="default: outputs.csv_dir")

    from .scenarios import FIGURES

    s = sub.add_parser("reproduce", help="run a canned figure scenario with checks")
    s.add_argument("figure", choices=FIGURES)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--no-figures", action="store_true", help="skip the PNG")

    sub.add_parser("schema", help="print the config JSON schema")

    s = sub.add_parser("plot", help="render a PNG/SVG/PDF line chart from a CSV")
    s.add_argument("csv", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--columns", nargs="+", default=None)
    s.add_argument("--logx", action="store_true")
    return p


def _print_schema() -> int:
    print(json.dumps(SCHEMA, indent=2, sort_keys=True))
    return EXIT_OK


def _run(args) -> int:
    if args.print_schema or args.command == "schema":
        return _print_schema()
    if args.command is None:
        raise ConfigError("no subcommand given; see --help")
    if args.command == "plot":
        from .plotting import plot_csv

        if not args.csv.is_file():
            raise ConfigError(f"no such CSV: {args.csv}")
        try:
            print(plot_csv(args.csv, args.out, args.columns, args.logx))
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        return EXIT_OK

    jobs = args.jobs or default_jobs()
    if args.command == "simulate":
        from .runner import simulate

        res = simulate(load_config(args.config), jobs=jobs, out_dir=args.out)
        for f in res.files:
            print(f)
        return EXIT_OK
    if args.command == "sweep":
        from .runner import sweep

        cfg = load_config(args.config)
        out = args.out or Path(cfg["outputs"]["csv_dir"])
        sweep(cfg, args.axis, args.values, out, jobs=jobs)
        print(out / "sweep.csv")
        return EXIT_OK
    from .scenarios import reproduce

    summary = reproduce(args.figure, args.out, figures=not args.no_figures)
    for c in summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.6g} {c['op']} "
              f"{c['threshold']:g}")
    if not summary["passed"]:
        print(f"{args.figure}: sidecar checks failed", file=sys.stderr)
        return EXIT_CHECKS
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
