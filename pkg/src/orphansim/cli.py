"""Command-line entry point: ``orphansim run|sweep|compare|validate``.

Exit status: 0 success, 1 configuration error, 2 runtime error,
3 report schema mismatch in ``compare``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .metrics import SchemaMismatchError
from .netsim import ConfigError
from .scenario import (
    SEED_ENV, ScenarioError, compare_reports, parse_scenario, resolve_seed, run_scenario,
    run_sweep, scenario_summary,
)
from .txmodel import WorkloadError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SCHEMA = 0, 1, 2, 3

log = logging.getLogger("orphansim")


def _u64(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"outside the unsigned 64-bit range: {v}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orphansim",
        description="Simulate orphan-transaction handling over a gossip network.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, runs=True):
        p.add_argument("--scenario", required=True, type=Path, help="scenario TOML file")
        if runs:
            p.add_argument("--out", type=Path, help="output directory (default: output_dir)")
            p.add_argument("--seed", type=_u64,
                           help=f"base seed override (else ${SEED_ENV}, else the file)")
            p.add_argument("--jobs", type=_positive_int, default=1,
                           help="replicates run concurrently")
            p.add_argument("--no-audit", action="store_true", help="skip the JSONL audit logs")

    scenario_args(sub.add_parser("run", help="run every replicate of a scenario"))
    scenario_args(sub.add_parser("sweep", help="run the scenario's parameter sweep"))
    scenario_args(sub.add_parser("validate", help="check a scenario file and print it"),
                  runs=False)
    cmp = sub.add_parser("compare", help="tabulate several report files")
    cmp.add_argument("reports", nargs="+", type=Path)
    cmp.add_argument("--out", type=Path, help="CSV destination (default: stdout)")
    return parser


def _load(args):
    s = parse_scenario(args.scenario)
    seed = resolve_seed(getattr(args, "seed", None))
    if seed is not None:
        s = s.with_seed(seed)
    return s


def _execute(args) -> int:
    if args.command == "validate":
        s = _load(args)
        print(json.dumps(scenario_summary(s), indent=1))
        return EXIT_OK

    if args.command == "compare":
        text = compare_reports(args.reports)
        if args.out:
            args.out.write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    s = _load(args)
    out = args.out if args.out is not None else s.output_dir
    if out is None:
        raise ScenarioError("no output directory: pass --out or set output_dir")
    runner = run_scenario if args.command == "run" else run_sweep
    log.info("%s %s: seeds %s -> %s", args.command, s.name, s.seeds, out)
    result = runner(s, out, jobs=args.jobs, audit=not args.no_audit)
    for o in result.outcomes:
        for path in o.files.values():
            print(path)
    for path in result.files.values():
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage; here 2 means a failed run
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _execute(args)
    except SchemaMismatchError as e:
        print(f"orphansim: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ScenarioError, ConfigError, WorkloadError) as e:
        print(f"orphansim: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # anything else failed while running
        print(f"orphansim: run failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
