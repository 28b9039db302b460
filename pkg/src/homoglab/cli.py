"""Command-line entry point: ``homoglab <subcommand> [--config PATH] [--seed N] [--out DIR] [--quiet]``."""

import argparse
import json
import logging
import sys

from . import fem2d
from .studies import NUMERICAL_ERRORS, RUNNERS, ConfigError, StudyConfig, run_study

log = logging.getLogger("homoglab")

SUBCOMMANDS = {
    "dump-field": "dump-field",
    "solve1d": "solve1d",
    "solve2d": "solve2d",
    "homogenize": "homogenize",
    "converge-1d": "convergence-1d",
    "converge-2d": "convergence-2d",
    "energy-conv": "energy-1d",
    "ergodic-orbit": "ergodic",
}

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser():
    parser = _Parser(prog="homoglab", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True
    for name, kind in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {kind} study (main output {RUNNERS[kind][1]})")
        p.add_argument("--config", help="JSON study config; defaults reproduce the standard setup")
        p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
        p.add_argument("--out", default="homoglab-out", help="output directory (default: %(default)s)")
        p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return parser


def cli_main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION

    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    kind = SUBCOMMANDS[args.command]
    try:
        if args.config:
            cfg = StudyConfig.load(args.config, kind=kind)
        else:
            cfg = StudyConfig(kind=kind)
        if args.seed is not None:
            cfg = StudyConfig.from_dict({**cfg.to_dict(), "seed": args.seed, "kind": kind}, kind=kind)
        report = run_study(cfg, args.out)
    except (FileNotFoundError, ConfigError, json.JSONDecodeError) as exc:
        print(f"homoglab: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (*NUMERICAL_ERRORS, fem2d.ConvergenceError, RuntimeError) as exc:
        print(f"homoglab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"homoglab: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    log.info("%s: wrote %s (%d rows) to %s", args.command, RUNNERS[kind][1], len(report.rows), args.out)
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
