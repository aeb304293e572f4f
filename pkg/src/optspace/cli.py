"""Command line front end for the benchmark harness.

One subcommand per experiment kind plus ``run`` for plan files.  Flags
override plan-file values.  Exit codes: 0 clean, 1 bad plan or input,
2 finished with failed trials recorded in the CSV.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from importlib import metadata

from .errors import CompletionError, PlanError, RatingsFormatError
from .plans import (NOISE_MODELS, PLAN_KINDS, SOLVERS, ExperimentPlan,
                    parse_plan_file, run_plan)

__all__ = ["main", "build_parser"]


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _version() -> str:
    try:
        return metadata.version("optspace")
    except metadata.PackageNotFoundError:
        return "unknown"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="base seed for all trial substreams")
    parser.add_argument("--trials", type=int, default=None,
                        help="seeds per grid point")
    parser.add_argument("--out", default=None, help="output CSV path")
    parser.add_argument("--rank", type=int, default=None,
                        help="fixed rank instead of the per-gridpoint value")
    parser.add_argument("--use-rank-estimation", action="store_true",
                        default=None,
                        help="estimate the rank from the data per trial")
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="regularization weight in [0, 1]")
    parser.add_argument("--tol", type=float, default=None,
                        help="relative fit tolerance for stopping")
    parser.add_argument("--kmax", type=int, default=None,
                        help="iteration cap per descent")
    parser.add_argument("--tau", type=float, default=None,
                        help="initial line search step")
    parser.add_argument("--rho-max", type=int, default=None,
                        help="rank cap for the incremental solver")
    parser.add_argument("--solver", choices=SOLVERS, default=None)
    parser.add_argument("--no-figures", action="store_true", default=None,
                        help="skip PNG rendering next to the CSV")


def _add_grid(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=_int_list, default=None,
                        help="comma list of matrix sizes")
    parser.add_argument("--r", type=_int_list, default=None,
                        help="comma list of ranks")
    parser.add_argument("--epsilon", type=_float_list, default=None,
                        help="comma list of sample densities |E|/sqrt(m n)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optspace",
        description="Low-rank matrix completion benchmarks and reports.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command")

    runp = sub.add_parser("run", help="execute a key=value plan file")
    runp.add_argument("--plan", required=True, help="path to the plan file")
    _add_common(runp)
    _add_grid(runp)

    for kind in PLAN_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        _add_common(p)
        if kind == "ratings_eval":
            p.add_argument("--input", required=True,
                           help="ratings file (user, item, rating rows)")
        elif kind == "incoherence_report":
            _add_grid(p)
            p.add_argument("--input", default=None,
                           help="optional ratings file to factor and inspect")
        else:
            _add_grid(p)
        if kind in ("noise_table", "noise_model_sweep"):
            p.add_argument("--noise", type=_float_list, default=None,
                           help="comma list of target noise ratios N")
            p.add_argument("--noise-models", type=_str_list, default=None,
                           help=f"comma list from {', '.join(NOISE_MODELS)}")
        if kind == "condition_sweep":
            p.add_argument("--kappa", type=_float_list, default=None,
                           help="comma list of condition numbers")
        if kind in ("ratings_eval", "incoherence_report"):
            p.add_argument("--format", choices=("tsv_triples", "matrix_market"),
                           default=None)
            p.add_argument("--holdout-k", type=int, default=None,
                           help="test ratings held out per user")
            p.add_argument("--holdout-seed", type=int, default=None)
            p.add_argument("--test-path", default=None,
                           help="fixed test-set file instead of a holdout")
            p.add_argument("--bounds-min", type=float, default=None)
            p.add_argument("--bounds-max", type=float, default=None)
    return parser


_ARG_TO_FIELD = {
    "out": "output_path",
    "input": "input_path",
    "format": "input_format",
    "noise": "noise",
}


def _assemble(args: argparse.Namespace) -> ExperimentPlan:
    if args.command == "run":
        plan = parse_plan_file(args.plan)
    else:
        plan = ExperimentPlan(kind=args.command)

    overrides = {}
    for arg, value in vars(args).items():
        if arg in ("command", "plan") or value is None:
            continue
        if arg == "no_figures":
            overrides["render_figures"] = False
            continue
        if arg in ("bounds_min", "bounds_max"):
            continue
        overrides[_ARG_TO_FIELD.get(arg, arg)] = value
    lo = getattr(args, "bounds_min", None)
    hi = getattr(args, "bounds_max", None)
    if (lo is None) != (hi is None):
        raise PlanError("set both --bounds-min and --bounds-max or neither")
    if lo is not None:
        overrides["bounds"] = (lo, hi)
    return replace(plan, **overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        plan = _assemble(args)
        outcome = run_plan(plan)
    except (PlanError, RatingsFormatError, CompletionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in outcome.csv_paths:
        print(f"wrote {path}")
    print(f"wrote {outcome.meta_path}")
    for path in outcome.figure_paths:
        print(f"wrote {path}")
    if outcome.failures:
        print(f"{outcome.failures} trial(s) failed; see error column",
              file=sys.stderr)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
