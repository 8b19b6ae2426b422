"""Command line entry point: ``diffeostat run <config> ...``."""

from __future__ import annotations

import argparse
import sys

from .config import DEFAULT_TOLERANCES, parse_config, schema_path, with_overrides
from .errors import DiffeostatError
from .report import FORMATS, emit_report
from .runner import run_all

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


def _tol_override(text: str) -> tuple[str, float]:
    key, sep, val = text.partition("=")
    if not sep or key not in DEFAULT_TOLERANCES:
        raise argparse.ArgumentTypeError(
            f"expected KEY=VALUE with KEY in {sorted(DEFAULT_TOLERANCES)}, got {text!r}")
    try:
        return key, float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {key!r} needs a number, got {val!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffeostat",
                                     description="Run Fisher-geometry experiments on finite models.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run experiments from a JSON config")
    run.add_argument("config")
    run.add_argument("--experiment", action="append", metavar="NAME",
                     help="run only this experiment (repeatable)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--format", choices=FORMATS, default="json")
    run.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    run.add_argument("--tol-override", type=_tol_override, action="append", default=[],
                     metavar="KEY=VAL")
    run.add_argument("--timing", action="store_true", help="include wall time (breaks byte stability)")

    check = sub.add_parser("validate", help="parse and validate a config without running it")
    check.add_argument("config")

    sub.add_parser("schema", help="print the path of the config JSON schema")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(schema_path())
        return EXIT_OK
    try:
        cfg = parse_config(args.config)
        if args.command == "validate":
            print(f"ok: {len(cfg.experiments)} experiment(s): {', '.join(cfg.experiment_names)}")
            return EXIT_OK
        if args.tol_override:
            cfg = with_overrides(cfg, dict(args.tol_override))
        records = run_all(cfg, args.seed, args.experiment)
        emit_report(records, args.format, args.out, timing=args.timing)
    except DiffeostatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if all(r.passed for r in records) else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
