"""Command-line entry point: ``uav-csee {solve,sweep,verify,oracle-alpha,scenario}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .ao import AoConfig, ao_solve
from .errors import InfeasibleStartError, ScenarioError
from .scenario import Scenario, default_scenario, default_scenario_text, read_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Usage(Exception):
    pass


def _scenario(path: str | None) -> Scenario:
    if path is None:
        return default_scenario()
    p = Path(path)
    if not p.is_file():
        raise _Usage(f"scenario not found: {path}")
    try:
        return read_scenario(p)
    except ScenarioError as exc:
        raise _Usage(f"invalid scenario {path}: {exc}") from exc


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def trace_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".trace.csv")


def cmd_solve(args) -> int:
    scn = _scenario(args.scenario)
    cfg = AoConfig(max_iterations=args.max_iterations, conv_tol=scn.conv_tol, mode=args.mode)
    try:
        sol, trace = ao_solve(scn, cfg)
    except InfeasibleStartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write(ex.solution_csv(scn, sol), args.out)
    if args.out is not None:
        _write(trace.to_csv(), str(trace_path(args.out)))
    print(ex.summary_line(sol, trace), file=sys.stderr if args.out is None else sys.stdout)
    return EXIT_OK


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise _Usage(f"--values must be comma-separated numbers: {exc}") from exc


def cmd_sweep(args) -> int:
    scn = _scenario(args.scenario)
    modes = tuple(args.mode.split(",")) if args.mode else ("prop",)
    try:
        spec = ex.SweepSpec(args.param, tuple(_values(args.values)), modes, args.seed)
    except ValueError as exc:
        raise _Usage(str(exc)) from exc
    rows = ex.run_sweep(scn, spec, args.max_iterations, args.workers)
    _write(ex.to_csv(ex.SWEEP_COLUMNS, rows), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    scn = _scenario(args.scenario)
    checks = ex.run_verify(args.suite, scn, args.seed)
    _write(ex.to_csv(ex.VERIFY_COLUMNS, [c.row() for c in checks]), args.out)
    failed = [c for c in checks if not c.passed]
    if failed:
        c = failed[0]
        print(f"FAIL {c.suite}/{c.check}: residual {c.residual!r} > tolerance {c.tolerance!r} "
              f"({len(failed)} of {len(checks)} checks failed)", file=sys.stderr)
        return EXIT_FAIL
    print(f"PASS {args.suite}: {len(checks)} checks", file=sys.stderr)
    return EXIT_OK


def cmd_oracle_alpha(args) -> int:
    scn = _scenario(args.scenario)
    _write(ex.to_csv(ex.ORACLE_COLUMNS, ex.oracle_alpha_rows(scn, args.step)), args.out)
    return EXIT_OK


def cmd_print_default(args) -> int:
    _write(default_scenario_text(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", metavar="PATH", help="scenario YAML (default: packaged table)")
    common.add_argument("--out", metavar="PATH", help="output CSV (default: stdout)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    p = argparse.ArgumentParser(prog="uav-csee", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="run the alternating optimizer")
    s.add_argument("--mode", choices=("prop", "ben1", "ben2"), default="prop")
    s.add_argument("--max-iterations", type=int, default=50)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    s.add_argument("--param", required=True, choices=ex.SWEEP_PARAMS)
    s.add_argument("--values", required=True, metavar="V1,V2,...")
    s.add_argument("--mode", default="prop", metavar="MODES",
                   help="comma-separated subset of prop,ben1,ben2")
    s.add_argument("--max-iterations", type=int, default=50)
    s.add_argument("--workers", type=int, default=None, help="worker processes (default: CPUs)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", parents=[common], help="run an oracle suite")
    s.add_argument("suite", choices=ex.VERIFY_SUITES)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("oracle-alpha", parents=[common],
                       help="phase split by the decision tree and by grid search")
    s.add_argument("--step", type=float, default=1e-4)
    s.set_defaults(func=cmd_oracle_alpha)

    s = sub.add_parser("scenario", help="scenario utilities")
    ssub = s.add_subparsers(dest="action", required=True)
    s2 = ssub.add_parser("print-default", parents=[common], help="print the packaged scenario")
    s2.set_defaults(func=cmd_print_default)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
