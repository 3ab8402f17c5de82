"""Command-line entry point.

    bvcalc list
    bvcalc run --scenario <id> [--resolution R] [--jmax J]
               [--tolerance T] [--seed S] [--output DIR]
    bvcalc oracle --case <file.json>

``run`` exits 0 iff every expected-outcome clause of the scenario holds.
"""

from __future__ import annotations

import argparse
import json
import sys

from .oracle import oracle_1d
from .scenarios import RunConfig, ScenarioError, run, scenario_catalog

USAGE_EXIT = 2


def build_parser():
    parser = argparse.ArgumentParser(prog="bvcalc", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    sub.add_parser("list", help="list scenario ids")

    runp = sub.add_parser("run", help="run one scenario")
    runp.add_argument("--scenario", required=True)
    runp.add_argument("--resolution", type=int, default=256)
    runp.add_argument("--jmax", type=int, default=256)
    runp.add_argument("--tolerance", type=float, default=1e-6)
    runp.add_argument("--seed", type=int, default=0)
    runp.add_argument("--output", default=None)

    oraclep = sub.add_parser("oracle", help="evaluate a 1D case description")
    oraclep.add_argument("--case", required=True)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list":
        for s in scenario_catalog():
            print(f"{s.sid:28s} {s.summary}")
        return 0
    if args.command == "run":
        try:
            config = RunConfig(
                scenario=args.scenario,
                resolution=args.resolution,
                jmax=args.jmax,
                tolerance=args.tolerance,
                seed=args.seed,
                output=args.output,
            )
            code, result = run(config)
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return USAGE_EXIT
        for clause in result.clauses:
            mark = "ok  " if clause.passed else "FAIL"
            print(f"[{mark}] {result.scenario}: {clause.name} (target {clause.target})")
        return code
    if args.command == "oracle":
        with open(args.case) as fh:
            case = json.load(fh)
        value = oracle_1d(
            case["u"], case["mu"], case["F"], domain=case.get("domain", (0.0, 1.0))
        )
        print(json.dumps({"value": value}))
        return 0
    parser.print_help()
    return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
