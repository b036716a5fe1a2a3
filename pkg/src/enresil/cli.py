"""Command-line interface.

Subcommands: analyze, sweep, heatmap, validate. Exit codes: 0 ok,
2 infeasible outcome, 3 configuration error, 4 solver iteration limit.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .energetics import TIGHTEN_ROWWISE, TIGHTEN_UNIFORM
from .experiment import (
    EXIT_CONFIG_ERROR,
    EXIT_INFEASIBLE,
    EXIT_OK,
    MissingSolutionError,
    RunOptions,
    monte_carlo_validate,
    run_experiment,
    run_heatmap,
    sweep_wbar,
)
from .formula import SpecError


def _add_common(p):
    p.add_argument("config", help="path to a TOML experiment configuration")
    p.add_argument("--out", default=None, help="output directory (overrides [output].dir)")
    p.add_argument(
        "--conservative-tightening", action="store_true",
        help="uniform matrix-norm tightening instead of exact row-wise",
    )
    p.add_argument(
        "--strict-eventually", action="store_true",
        help="eventuality witnesses start at t=1 (never satisfied by x0 alone)",
    )
    p.add_argument("--workers", type=int, default=None, help="worker process count")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="enresil",
        description=(
            "Energetic resilience of discrete-time LTI systems under "
            "finite-trace temporal logic tasks"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="energies, resilience, and composition bounds at x0")
    _add_common(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument(
        "--exact-joint", action="store_true",
        help="only the exact joint analysis, skip component bounds",
    )
    group.add_argument(
        "--component-bounds", action="store_true",
        help="only the per-component composition bound, skip the joint analysis",
    )

    p = sub.add_parser("sweep", help="resilience across a ladder of disturbance bounds")
    _add_common(p)
    p.add_argument(
        "--wbar", default=None,
        help="comma-separated ascending bounds (default: the [sweep] block)",
    )

    p = sub.add_parser("heatmap", help="resilience over a grid of initial states")
    _add_common(p)

    p = sub.add_parser("validate", help="Monte-Carlo check of the worst-case input")
    _add_common(p)
    p.add_argument("--samples", type=int, default=None, help="number of disturbance rollouts")
    p.add_argument("--seed", type=int, default=None, help="RNG seed")
    return parser


def _options(args) -> RunOptions:
    opts = RunOptions(
        tightening=TIGHTEN_UNIFORM if args.conservative_tightening else TIGHTEN_ROWWISE,
        strict_eventually=args.strict_eventually,
        workers=args.workers,
    )
    if getattr(args, "exact_joint", False):
        opts.component_bounds = False
    if getattr(args, "component_bounds", False):
        opts.exact_joint = False
    return opts


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    options = _options(args)

    try:
        if args.command == "analyze":
            result = run_experiment(config, options, out_dir=args.out)
            _print_analysis(result)
            return result.exit_code
        if args.command == "sweep":
            wbars = None
            if args.wbar is not None:
                wbars = [float(tok) for tok in args.wbar.split(",") if tok.strip()]
            records, files = sweep_wbar(config, wbars, options, out_dir=args.out)
            for r in records:
                print(
                    f"wbar={r.wbar:g}: resilience="
                    f"{'-' if r.resilience is None else format(r.resilience, '.6g')} [{r.status}]"
                )
            for f in files:
                print(f"wrote {f}")
            return EXIT_OK
        if args.command == "heatmap":
            rows, files = run_heatmap(config, options, out_dir=args.out)
            n_ok = sum(1 for *_xy, _res, status in rows if status == "ok")
            print(f"evaluated {len(rows)} grid points ({n_ok} ok)")
            for f in files:
                print(f"wrote {f}")
            return EXIT_OK
        if args.command == "validate":
            summary, files = monte_carlo_validate(
                config, samples=args.samples, seed=args.seed,
                options=options, out_dir=args.out,
            )
            print(
                f"{summary.satisfied}/{summary.samples} rollouts satisfied the formula; "
                f"max row violation {summary.max_row_violation:.3e}; "
                f"tightening activeness error {summary.tightening_activeness_error:.3e}"
            )
            for f in files:
                print(f"wrote {f}")
            return EXIT_OK if summary.ok else EXIT_INFEASIBLE
    except (ValueError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except MissingSolutionError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    raise AssertionError(f"unhandled command {args.command!r}")


def _print_analysis(result):
    rep = result.report
    if rep is not None:
        res = "-" if rep.resilience is None else format(rep.resilience, ".6g")
        print(f"status: {rep.status}; resilience: {res}")
    if result.composed is not None:
        bound = result.composed.resilience_bound
        print(
            f"component {result.composed.mode} bound over "
            f"{result.composed.component_count} tasks: "
            f"{'-' if bound is None else format(bound, '.6g')}"
        )
    for f in result.files:
        print(f"wrote {f}")


if __name__ == "__main__":
    sys.exit(main())
