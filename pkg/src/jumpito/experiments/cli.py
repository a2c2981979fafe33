"""``jumpito run <config>`` and ``jumpito list-drivers``."""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import JumpitoError
from .catalog import catalog_listing
from .config import load_config
from .runner import run_experiment, write_reports

log = logging.getLogger("jumpito")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumpito", description="Seeded Ito-formula verification sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config", help="path to an INI experiment config")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--paths", type=int, default=None, help="override the number of paths")
    run.add_argument("--workers", type=int, default=None, help="override the worker pool size")
    run.add_argument("--out-dir", default=".", help="directory for the CSV and JSON reports")
    run.add_argument("--assert", dest="check", action=argparse.BooleanOptionalAction, default=True,
                     help="exit nonzero when a configured invariant fails")
    sub.add_parser("list-drivers", help="print the built-in driver catalog")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    if args.command == "list-drivers":
        print("\n".join(catalog_listing()))
        return 0
    try:
        cfg = load_config(args.config, seed=args.seed, paths=args.paths, workers=args.workers)
        result = run_experiment(cfg)
    except JumpitoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    csv_path, json_path = write_reports(result, args.out_dir)
    log.info("wrote %s and %s", csv_path, json_path)
    for a in result.assertions:
        log.info("%s %s: %s", "PASS" if a.passed else "FAIL", a.name, a.detail)
    if args.check and not result.passed:
        names = ", ".join(a.name for a in result.failures())
        print(f"assertion failed: {names}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
