"""Command-line entry point: validate, run all studies, render tables."""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .experiments import csv_to_markdown, run_studies


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toyfock",
        description="Numerical laboratory for discrete vacuum-adapted "
                    "stochastic integrals on toy Fock space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config path")
    common.add_argument("--out", default=None, help="output directory override")
    common.add_argument("--seed", type=int, default=None,
                        help="64-bit seed override")
    common.add_argument("--threads", type=int, default=1,
                        help="concurrent studies (default 1)")
    common.add_argument("--zero-timings", action="store_true",
                        help="write 0.0 in the seconds column for "
                             "byte-reproducible CSV output")

    sub.add_parser("validate", parents=[common],
                   help="run the validation studies only")
    sub.add_parser("run", parents=[common], help="run every study in the config")

    table = sub.add_parser("table", help="render a study CSV as Markdown")
    table.add_argument("csv", help="CSV file produced by run/validate")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "table":
        with open(args.csv, "r", encoding="utf-8") as fh:
            sys.stdout.write(csv_to_markdown(fh.read()))
        return 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed & ((1 << 64) - 1)
    threads = max(1, min(args.threads, os.cpu_count() or 1))
    kinds = ("validate",) if args.command == "validate" else None
    try:
        results = run_studies(cfg, out_dir=args.out, threads=threads,
                              zero_timings=args.zero_timings, kinds=kinds)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"study {r.index:02d} {r.kind}: {status}")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
