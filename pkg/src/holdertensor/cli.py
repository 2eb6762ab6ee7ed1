"""Command-line entry point.

Subcommands::

    run         run a scheme on a zoo instance and write trace.csv / summary.json
    replay      compare a written trace with explicit bounds
    slope       empirical rate slope of the min-gradient envelope
    lowerbound  evaluate a worst-case lower bound

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 a bound
was violated during replay.
"""

from __future__ import annotations

import argparse
import sys

from .bench import (
    BOUND_TAGS,
    SCHEMES,
    ConfigError,
    ExperimentConfig,
    load_run,
    lower_bound_evaluate,
    replay_bounds,
    run_experiment,
    slope_estimate,
)
from .schemes import SchemeError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VIOLATED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors map to the configuration exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _nu(text):
    if text.lower() == "unknown":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number or 'unknown'") from None


def build_parser():
    parser = _Parser(prog="holdertensor", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scheme on an instance")
    run.add_argument("--instance", required=True,
                     help="zoo spec, e.g. 'power_norm:degree=4,n=16'")
    run.add_argument("--scheme", required=True, choices=SCHEMES)
    run.add_argument("--eps", type=float, default=1e-6)
    run.add_argument("--p", type=int, default=2, choices=(2, 3))
    run.add_argument("--nu", type=_nu, default=None, help="exponent in [0, 1] or 'unknown'")
    run.add_argument("--h0", type=float, default=1.0)
    run.add_argument("--htilde0", type=float, default=1.0)
    run.add_argument("--theta", type=float, default=1e-2)
    run.add_argument("--max-iters", type=int, default=1000)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--x-coords", action="store_true", help="store iterates in the CSV")
    run.add_argument("--nonconvex", action="store_true")
    run.add_argument("--fixed-m", type=float, default=None,
                     help="fixed constant for alg5/algA")
    run.add_argument("--delta", type=float, default=None, help="alg6 regularization")
    run.add_argument("--R", type=float, default=None, help="alg6 distance bound")
    run.add_argument("--S", type=float, default=None, help="alg6 residual bound")

    rep = sub.add_parser("replay", help="check a trace against explicit bounds")
    rep.add_argument("--trace", required=True, help="trace.csv or its run directory")
    rep.add_argument("--bounds", default="all",
                     help=f"comma-separated tags or 'all' ({', '.join(BOUND_TAGS)})")
    rep.add_argument("--slack", type=float, default=0.0)

    slope = sub.add_parser("slope", help="rate slope over an iteration window")
    slope.add_argument("--trace", required=True)
    slope.add_argument("--from", dest="start", type=int, required=True)
    slope.add_argument("--to", dest="end", type=int, required=True)

    low = sub.add_parser("lowerbound", help="evaluate a worst-case lower bound")
    low.add_argument("--p", type=int, required=True)
    low.add_argument("--nu", type=float, required=True)
    low.add_argument("--t", type=int, required=True)
    low.add_argument("--mode", choices=("residual", "distance"), required=True)
    return parser


def _cmd_run(args):
    config = ExperimentConfig(
        instance=args.instance, scheme=args.scheme, epsilon=args.eps, p=args.p, nu=args.nu,
        H0=args.h0, Htilde0=args.htilde0, theta=args.theta, max_iters=args.max_iters,
        seed=args.seed, out=args.out, x_coords=args.x_coords, nonconvex=args.nonconvex,
        fixed_M=args.fixed_m, delta=args.delta, R=args.R, S=args.S)
    try:
        trace = run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    rows = trace.rows
    print(f"{trace.scheme}: {trace.status} after {rows[-1][0]} iterations, "
          f"{rows[-1][6]} oracle calls, min gradient {trace.min_gradient():.6e}")
    if trace.message:
        print(trace.message)
    return EXIT_OK


def _cmd_replay(args):
    try:
        trace = load_run(args.trace)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    tags = BOUND_TAGS if args.bounds == "all" else [t.strip() for t in args.bounds.split(",")]
    try:
        reports = replay_bounds(trace, tags=tags, slack=args.slack)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in reports:
        print(r.line())
    violated = any(not r.skipped and not r.satisfied for r in reports)
    return EXIT_VIOLATED if violated else EXIT_OK


def _cmd_slope(args):
    try:
        trace = load_run(args.trace)
        value = slope_estimate(trace, (args.start, args.end))
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{value:.12g}")
    return EXIT_OK


def _cmd_lowerbound(args):
    try:
        value = lower_bound_evaluate(args.p, args.nu, args.t, args.mode)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{value:.17g}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "replay": _cmd_replay, "slope": _cmd_slope,
               "lowerbound": _cmd_lowerbound}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
