"""Command-line interface: ``blocksolve {generate,solve,validate,bench}``.

Exit codes: 0 on success, 1 when a configuration fails validation (including
sample sizes outside the uniform-sampling range), 2 on runtime errors and
usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import ConfigError, SolverConfig
from .harness import ALGOS, infer_regime, make_config, run_experiment, solve
from .io import dumps_json, load_problem, save_problem
from .parallel import WORKERS_ENV, default_workers
from .problem import gen_ncqp, random_classo
from .validate import balanced_rho_x, validate_config, validate_stochastic

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("blocksolve")


class ValidationFailed(Exception):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _rho(value: str):
    if value == "auto":
        return value
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {value!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("rho-x must be nonnegative")
    return v


def _add_common(p):
    p.add_argument("--json", action="store_true", help="print results and errors as JSON")


def _add_algo_flags(p, with_iters=True):
    p.add_argument("--algo", choices=ALGOS, default="rpdbu", help="solver (default: rpdbu)")
    p.add_argument("--regime", choices=("no-y", "single-y", "multi-xy"),
                   help="parameter regime (default: inferred from the number of y blocks)")
    p.add_argument("--n-sample", type=int, default=1, metavar="K",
                   help="x blocks sampled per iteration (default: 1)")
    p.add_argument("--m-sample", type=int, metavar="K",
                   help="y blocks sampled per iteration (default: keeps m/M = n/N)")
    p.add_argument("--rho-x", type=_rho, default="auto", metavar="R",
                   help="x penalty; 'auto' uses L_f / lmax(A'A) (default: auto)")
    if with_iters:
        p.add_argument("--iters", type=int, default=1000, metavar="T",
                       help="iterations (default: 1000)")
    p.add_argument("--seed", type=int, default=0, metavar="S",
                   help="seed for all random streams (default: 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocksolve",
        description="Randomized primal-dual block coordinate solvers for linearly "
                    "constrained multi-block convex problems.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    gen = sub.add_parser("generate", help="write a problem instance or a solver config")
    gsub = gen.add_subparsers(dest="kind", metavar="KIND", required=True)

    g = gsub.add_parser("ncqp", help="nonnegativity constrained random QP")
    g.add_argument("--m", type=int, required=True, help="number of equality constraints")
    g.add_argument("--n", type=int, required=True, help="number of variables")
    g.add_argument("--blocks", type=int, required=True, help="number of equal x blocks")
    g.add_argument("--rank-deficit", type=int, default=0,
                   help="rank deficit of the Hessian (default: 0)")
    g.add_argument("--seed", type=int, default=0, help="generator seed (default: 0)")
    g.add_argument("--out", required=True, metavar="FILE", help="problem file to write")
    _add_common(g)

    g = gsub.add_parser("classo", help="random constrained lasso with a slack y block")
    g.add_argument("--rows", type=int, required=True, help="observations (rows of A)")
    g.add_argument("--dim", type=int, required=True, help="number of x variables")
    g.add_argument("--constraints", type=int, required=True, help="rows of C in Cx <= d")
    g.add_argument("--blocks", type=int, required=True, help="number of equal x blocks")
    g.add_argument("--tau", type=float, default=1.0, help="l1 weight (default: 1.0)")
    g.add_argument("--seed", type=int, default=0, help="generator seed (default: 0)")
    g.add_argument("--out", required=True, metavar="FILE", help="problem file to write")
    _add_common(g)

    g = gsub.add_parser("config", help="derive a solver config from the parameter rules")
    g.add_argument("--problem", required=True, metavar="FILE", help="problem file")
    _add_algo_flags(g)
    g.add_argument("--out", required=True, metavar="FILE", help="config file to write")
    _add_common(g)

    s = sub.add_parser("solve", help="run a solver and write its metric trace")
    s.add_argument("--problem", required=True, metavar="FILE", help="problem file")
    s.add_argument("--config", metavar="FILE",
                   help="solver config file (validated; overrides the derived settings)")
    _add_algo_flags(s)
    s.add_argument("--alpha0", type=float, default=1.0, metavar="A",
                   help="rpdbus initial step (default: 1.0)")
    s.add_argument("--schedule", choices=("sqrtk", "fixed"), default="sqrtk",
                   help="rpdbus step schedule; 'fixed' uses alpha0/sqrt(iters) (default: sqrtk)")
    s.add_argument("--sigma", type=float, default=0.0, metavar="SD",
                   help="rpdbus gradient noise level, E||noise||^2 = SD^2 (default: 0)")
    s.add_argument("--gamma", type=float, default=1.0, metavar="G",
                   help="pjadmm multiplier damping (default: 1.0)")
    s.add_argument("--cadence", type=int, metavar="C",
                   help="iterations between metric rows (default: one epoch)")
    s.add_argument("--trace", metavar="FILE", help="CSV trace to write")
    s.add_argument("--workers", type=int, metavar="W",
                   help=f"threads for block updates (default: all cores; {WORKERS_ENV} overrides)")
    s.add_argument("--no-wall-time", action="store_true",
                   help="write 0 in the wall_s column so traces are byte-reproducible")
    _add_common(s)

    v = sub.add_parser("validate", help="check a solver config against the parameter rules")
    v.add_argument("--problem", required=True, metavar="FILE", help="problem file")
    v.add_argument("--config", required=True, metavar="FILE", help="solver config file")
    v.add_argument("--stochastic", action="store_true",
                   help="apply the rpdbus rules (rho_x == rho, global weight bound)")
    _add_common(v)

    b = sub.add_parser("bench", help="run an experiment file (problems x algos x seeds)")
    b.add_argument("--config", required=True, metavar="FILE", help="experiment JSON file")
    b.add_argument("--out", required=True, metavar="DIR", help="output directory")
    b.add_argument("--workers", type=int, metavar="W",
                   help=f"threads for block updates (default: all cores; {WORKERS_ENV} overrides)")
    b.add_argument("--no-wall-time", action="store_true",
                   help="write 0 in the wall_s column")
    _add_common(b)
    return parser


def _workers(args) -> int:
    if os.environ.get(WORKERS_ENV):
        return default_workers()
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return args.workers
    return default_workers()


def _emit(args, text, data):
    print(dumps_json(data, indent=1) if args.json else text)


def _resolve_rho(args, problem):
    return balanced_rho_x(problem) if args.rho_x == "auto" else args.rho_x


def _cmd_generate(args):
    if args.kind == "ncqp":
        problem = gen_ncqp(args.m, args.n, args.blocks, args.rank_deficit, args.seed)
    elif args.kind == "classo":
        problem = random_classo(args.rows, args.dim, args.constraints, args.blocks, args.tau,
                                args.seed)
    else:
        problem = load_problem(args.problem)
        config = make_config(problem, args.algo, args.regime, args.n_sample, args.m_sample,
                             _resolve_rho(args, problem), args.iters, args.seed)
        config.save(args.out)
        _emit(args, f"wrote {args.out} (regime {config.regime.value}, n={config.n}, "
                    f"rho_x={config.rho_x:.6g})", {"out": args.out, "config": config.to_dict()})
        return EXIT_OK
    save_problem(problem, args.out)
    info = {"out": args.out, "N": problem.num_x_blocks, "M": problem.num_y_blocks,
            "dim": problem.x_partition.total_dim, "p": problem.p}
    _emit(args, f"wrote {args.out} (N={info['N']}, M={info['M']}, dim={info['dim']}, "
                f"p={info['p']})", info)
    return EXIT_OK


def _cmd_solve(args):
    problem = load_problem(args.problem)
    if args.config:
        config = SolverConfig.load(args.config).replace(max_iters=args.iters, seed=args.seed)
        if args.algo == "rpdbus":
            report = validate_stochastic(problem, config)
        else:
            report = validate_config(problem, config)
        if not report.ok:
            raise ValidationFailed("config fails validation:\n" + report.to_text(), report)
    else:
        config = make_config(problem, args.algo, args.regime, args.n_sample, args.m_sample,
                             _resolve_rho(args, problem), args.iters, args.seed)
    if args.cadence is not None and args.cadence < 1:
        raise ConfigError("--cadence must be >= 1")
    trace = solve(problem, args.algo, config, cadence=args.cadence, workers=_workers(args),
                  sigma=args.sigma, alpha0=args.alpha0, schedule=args.schedule, gamma=args.gamma)
    if args.trace:
        trace.to_csv(args.trace, wall_time=not args.no_wall_time)
    last = trace.rows[-1]._asdict() if trace.rows else {}
    data = {"algo": args.algo, "regime": config.regime.value, "iters": config.max_iters,
            "rows": len(trace), "trace": args.trace, "kernel": trace.info.get("kernel"),
            "residualAlarms": trace.info.get("residual_alarms", 0), "last": last}
    text = f"{args.algo}: {len(trace)} rows, kernel {data['kernel']}"
    if last:
        text += (f"\nk={last['k']} obj_last={last['obj_last']:.10g} "
                 f"obj_erg={last['obj_erg']:.10g} feas_erg={last['feas_erg']:.3e}")
    _emit(args, text, data)
    return EXIT_OK


def _cmd_validate(args):
    problem = load_problem(args.problem)
    config = SolverConfig.load(args.config)
    report = validate_stochastic(problem, config) if args.stochastic else validate_config(problem, config)
    _emit(args, report.to_text(), report.to_dict())
    return EXIT_OK if report.ok else EXIT_INVALID


def _cmd_bench(args):
    summary = run_experiment(args.config, args.out, workers=_workers(args),
                             wall_time=not args.no_wall_time)
    failed = [r for r in summary if r["status"] != "ok"]
    text = f"{len(summary)} cells, {len(failed)} failed; summary in {os.path.join(args.out, 'summary.csv')}"
    _emit(args, text, {"cells": len(summary), "failed": len(failed), "summary": summary})
    return EXIT_RUNTIME if failed else EXIT_OK


_COMMANDS = {"generate": _cmd_generate, "solve": _cmd_solve, "validate": _cmd_validate,
             "bench": _cmd_bench}


def _fail(args, code, kind, message):
    if getattr(args, "json", False):
        print(json.dumps({"error": {"kind": kind, "code": code, "message": message}}),
              file=sys.stderr)
    else:
        print(f"blocksolve: error: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ValidationFailed, ConfigError) as exc:
        return _fail(args, EXIT_INVALID, "validation", str(exc))
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 2
        return _fail(args, EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
