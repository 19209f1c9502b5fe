"""Command-line entry point: ``chernweil <pipeline> [options]``.

Exit status: 0 all checks pass, 1 a check failed, 2 usage error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .integrate import QuadConfig, QuadratureError
from .pipelines import PIPELINES, Report, run
from .symexpr import EvaluationError

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chernweil", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name in PIPELINES + ("verify-paper",):
        s = sub.add_parser(name)
        s.add_argument("--tol", type=float, default=1e-9, help="relative quadrature tolerance")
        s.add_argument("--atol", type=float, default=1e-12, help="absolute quadrature tolerance")
        s.add_argument("--max-subdiv", type=int, default=10**5)
        s.add_argument("--compactify", choices=("tan", "polar"), default=None,
                       help="improper-integral compactification (default: polar for CP^2 integrals)")
        s.add_argument("--trunc", type=int, default=8, help="form-degree truncation for ahat-expand")
        s.add_argument("--seed", type=int, default=0, help="seed for random sample points")
        s.add_argument("--json", type=Path, default=None, help="JSON report path (default report-<command>.json)")
        s.add_argument("--md", type=Path, default=None, help="also write a markdown summary")
    return p


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _print(rep: Report, elapsed: float):
    print(f"== {rep.pipeline} ({elapsed:.1f} s)")
    _print_results(rep)
    for c in rep.checks:
        print("  " + c.line())


def _print_results(rep: Report):
    r = rep.results
    if rep.pipeline == "ahat-expand":
        print("  A-hat = " + " + ".join(f"({v})*{k}" if k != "1" else v for k, v in r["expansion"].items()))
    elif rep.pipeline == "hopf-fiber":
        v = r["fiber_integral"]
        print(f"  int theta over the fiber = {v['value'][0]!r} +/- {v['error']:.1e} (2*pi = 6.283185307179586)")
    elif rep.pipeline == "cp2-index":
        for k, v in r["integrals"].items():
            print(f"  {k} = {v['units_of_2pi_squared']:.12f} (2pi)^2 +/- {v['error']:.1e}")


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        cfg = QuadConfig(rtol=args.tol, atol=args.atol, max_subdiv=args.max_subdiv,
                         compactify=args.compactify or "polar")
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    names = PIPELINES if args.command == "verify-paper" else (args.command,)
    reports = []
    try:
        for name in names:
            t = time.perf_counter()
            rep = run(name, cfg, trunc=args.trunc, seed=args.seed)
            _print(rep, time.perf_counter() - t)
            reports.append(rep)
    except (QuadratureError, EvaluationError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command == "verify-paper":
        payload = {"tool": "chernweil", "pipeline": "verify-paper",
                   "reports": [r.to_json() for r in reports],
                   "pass": all(r.passed for r in reports)}
        from . import __version__
        payload["version"] = __version__
        md = "".join(r.to_markdown() + "\n" for r in reports)
    else:
        payload = reports[0].to_json()
        md = reports[0].to_markdown()
    out = args.json or Path(f"report-{args.command}.json")
    out.write_text(_dump(payload))
    if args.md:
        args.md.write_text(md)
    ok = payload["pass"]
    failed = sum(not c.passed for r in reports for c in r.checks)
    print(f"{'all checks passed' if ok else f'{failed} check(s) failed'}; report written to {out}")
    return EXIT_OK if ok else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
