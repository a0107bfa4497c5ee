"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 failure during a run.  Errors are
written to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from ..accounting import DEFAULT_DEFICIT_THRESHOLD, DEFAULT_MIN_SAMPLES, Grouping
from ..errors import InvalidInput, NetPromiseError
from ..flowsim import run as run_simulation
from ..topology import load_topology_file, shortest_path
from .output import load_ledger, reports_doc, write_outputs
from .scenario import load_scenario, validate_scenario
from .trace import to_events

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _diagnose(exc: BaseException, code: str | None = None) -> None:
    payload = {"error": code or type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    validate_scenario(scenario)
    result = run_simulation(
        scenario.build_state(), to_events(scenario.trace), scenario.sim, scenario.degradation
    )
    files = write_outputs(result, args.out)
    for name in ("timeline", "completions", "ledger", "reports"):
        print(files[name])
    return EXIT_OK


def cmd_route(args: argparse.Namespace) -> int:
    topo = load_topology_file(args.topology)
    print(shortest_path(topo, args.src, args.dst))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    validate_scenario(load_scenario(args.scenario))
    print(f"ok: {args.scenario}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    ledger = load_ledger(args.ledger)
    doc = reports_doc(
        ledger,
        groupings=(Grouping(args.group),),
        deficit_threshold=args.threshold,
        min_samples=args.min_samples,
    )
    print(json.dumps(doc, indent=2, allow_nan=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netpromise",
        description="Bandwidth promise scheduler and fluid transfer simulator.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write result files")
    p.add_argument("scenario")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("route", help="print the hop-count shortest path")
    p.add_argument("topology")
    p.add_argument("src")
    p.add_argument("dst")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("validate", help="check a scenario without running it")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="re-run promise analytics on a ledger.json")
    p.add_argument("ledger")
    p.add_argument("--group", choices=[g.value for g in Grouping], default="segment")
    p.add_argument("--threshold", type=float, default=DEFAULT_DEFICIT_THRESHOLD)
    p.add_argument("--min-samples", type=int, default=DEFAULT_MIN_SAMPLES)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; bad arguments are invalid input here
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except InvalidInput as exc:
        _diagnose(exc)
        return EXIT_INVALID
    except NetPromiseError as exc:
        _diagnose(exc)
        return EXIT_RUNTIME
    except OSError as exc:
        _diagnose(exc, "OSError")
        return EXIT_INVALID
    except Exception as exc:  # never let a traceback be the interface
        _diagnose(exc, "InternalError")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
