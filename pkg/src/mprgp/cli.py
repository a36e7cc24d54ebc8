"""Command-line entry point: ``mprgp <command> ...``.

Exit status is 0 when every run converged, 1 when any run did not, and 2
on bad input (missing files, malformed data, invalid options).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import bench, datasets, svm
from .linop import estimate_norm
from .problem import load_problem
from .smalbe import SmalbeConfig, solve_equality
from .solver import DEFAULT_STRATEGIES, SolverConfig, parse_strategy, solve

EXIT_OK, EXIT_UNCONVERGED, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_run_options(p: argparse.ArgumentParser, rtol: float) -> None:
    p.add_argument("--rtol", type=float, default=rtol)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--max-hess", type=int, default=100_000, dest="max_hess")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the table here instead of stdout")
    p.add_argument("--format", choices=("csv", "markdown", "json"), default="csv")


def _add_sweep_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sweep", action="store_true", help="run the strategy/alpha_u sweep")
    p.add_argument("--strategies", type=_names, default=list(DEFAULT_STRATEGIES))
    p.add_argument("--alpha-grid", type=_floats, default=list(bench.DEFAULT_ALPHA_GRID),
                   dest="alpha_grid")
    p.add_argument("--strategy", default="fixed", help="strategy for a single run")
    p.add_argument("--alpha-u", type=float, default=1.9, dest="alpha_u")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mprgp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a QP given as JSON")
    p.add_argument("--problem", required=True)
    p.add_argument("--strategy", default="fixed")
    p.add_argument("--alpha-u", type=float, default=1.9, dest="alpha_u")
    _add_run_options(p, 1e-6)

    p = sub.add_parser("svm", help="train a no-bias linear SVM through its dual")
    p.add_argument("--data", required=True,
                   help=f"LIBSVM file or bundled name ({', '.join(datasets.NAMES)})")
    p.add_argument("--loss", choices=("l1", "l2"), default="l1")
    p.add_argument("--C", type=float, default=1.0, dest="C")
    p.add_argument("--beta", type=float, default=1.0)
    _add_sweep_options(p)
    _add_run_options(p, 0.1)

    p = sub.add_parser("obstacle", help="membrane over an obstacle on the unit square")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)
    p.add_argument("--load", type=float, default=-10.0)
    p.add_argument("--obstacle", type=float, default=-0.1)
    _add_sweep_options(p)
    _add_run_options(p, 1e-6)

    p = sub.add_parser("eq-toy", help="random box QP with equality constraints")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    _add_sweep_options(p)
    _add_run_options(p, 1e-6)

    p = sub.add_parser("norm", help="power-iteration estimate of ||A||")
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _write(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _render(rows, fmt, title=None) -> str:
    if fmt == "json":
        return json.dumps([{k: getattr(r, k) for k in bench.CSV_COLUMNS} for r in rows],
                          indent=2) + "\n"
    return bench.emit(rows, fmt, title)


def _load_data(name: str):
    if name in datasets.NAMES and not os.path.exists(name):
        return datasets.load(name)
    if not os.path.exists(name):
        raise InputError(f"data file not found: {name}")
    return svm.load_dataset(name)


def _spec(args, source: str, params: dict, name: str) -> bench.SweepSpec:
    if args.sweep:
        strategies, grid = args.strategies, args.alpha_grid
    else:
        strategies, grid = [args.strategy], [args.alpha_u]
    return bench.SweepSpec(source, params, strategies, grid, rtol=args.rtol, gamma=args.gamma,
                           max_hessian_mults=args.max_hess, seed=args.seed,
                           workers=args.workers, benchmark=name)


def _finish(rows, args, title=None) -> int:
    _write(_render(rows, args.format, title), args.out)
    for r in rows:
        if r.error:
            print(f"{r.strategy} alpha_u={r.alpha_u}: {r.error}", file=sys.stderr)
    return EXIT_OK if all(r.converged for r in rows) else EXIT_UNCONVERGED


def cmd_solve(args) -> int:
    if not os.path.exists(args.problem):
        raise InputError(f"problem file not found: {args.problem}")
    problem = load_problem(args.problem)
    x0 = bench._start(problem)
    config = SolverConfig(gamma=args.gamma, rtol=args.rtol, max_hessian_mults=args.max_hess,
                          strategy=parse_strategy(args.strategy, args.alpha_u))
    if problem.has_equalities:
        rep = solve_equality(problem, x0, SmalbeConfig(outer_rtol=args.rtol, inner=config))
    else:
        rep = solve(problem, x0, config)
    if args.format == "json":
        doc = {k: getattr(rep, k) for k in ("converged", "projected_gradient_norm", "hessian_mults",
                                            "cg_steps", "expansion_steps", "proportioning_steps",
                                            "outer_iterations", "setup_mults", "norm_mults",
                                            "final_cost")}
        doc["x"] = [float(v) for v in rep.x]
        _write(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        alpha = None if config.strategy.kind == "projcg" else args.alpha_u
        row = bench.SweepRow(os.path.basename(args.problem), args.strategy, alpha,
                             rep.outer_iterations, rep.hessian_mults, rep.cg_steps,
                             rep.expansion_steps, rep.proportioning_steps, rep.converged,
                             rep.projected_gradient_norm)
        _write(bench.emit([row], args.format), args.out)
    return EXIT_OK if rep.converged else EXIT_UNCONVERGED


def cmd_svm(args) -> int:
    data = _load_data(args.data)
    name = os.path.splitext(os.path.basename(args.data))[0]
    spec = _spec(args, "svm-dataset",
                 dict(data=data, loss=args.loss, C=args.C, beta=args.beta), name)
    rows = bench.run_sweep(spec)
    if not args.sweep and rows[0].error is None:
        model, _ = svm.train(data, args.loss, args.C, args.beta, SolverConfig(
            gamma=args.gamma, rtol=args.rtol, max_hessian_mults=args.max_hess,
            strategy=parse_strategy(args.strategy, args.alpha_u)))
        print(f"training accuracy {svm.accuracy(model, data):.4f}", file=sys.stderr)
    return _finish(rows, args, f"{name}, {args.loss} loss, C={args.C:g}")


def cmd_obstacle(args) -> int:
    spec = _spec(args, "obstacle",
                 dict(nx=args.nx, ny=args.ny, load=args.load, obstacle=args.obstacle), None)
    b = bench.resolve(spec)
    return _finish(bench.run_sweep(spec, b), args, f"{b.name} ({b.note})")


def cmd_eq_toy(args) -> int:
    spec = _spec(args, "eq-toy", dict(n=args.n, m=args.m), None)
    return _finish(bench.run_sweep(spec), args)


def cmd_norm(args) -> int:
    if not os.path.exists(args.problem):
        raise InputError(f"problem file not found: {args.problem}")
    problem = load_problem(args.problem)
    est = estimate_norm(problem.operator, seed=args.seed)
    print(json.dumps({"norm_estimate": est.value, "iterations": est.iterations,
                      "hessian_mults": est.mults_spent}))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "svm": cmd_svm, "obstacle": cmd_obstacle,
            "eq-toy": cmd_eq_toy, "norm": cmd_norm}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (InputError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
