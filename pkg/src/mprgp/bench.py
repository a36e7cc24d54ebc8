"""Problem generators and expansion-strategy sweeps.

A sweep runs every requested strategy over a grid of ``alpha_u`` values on
one problem, with ``||A||`` estimated once and shared. Rows come out in a
fixed order (strategies as given, ``alpha_u`` ascending) and can be written
as CSV or as a markdown table.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .linop import dense_operator, estimate_norm, sparse_operator
from .problem import BoxQP, load_problem, project
from .smalbe import SmalbeConfig, solve_equality
from .solver import DEFAULT_STRATEGIES, STEP_COST, SolverConfig, parse_strategy, solve

DEFAULT_ALPHA_GRID = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 1.9, 1.95, 2.0)

CSV_COLUMNS = ("benchmark", "strategy", "alpha_u", "outer_iterations", "hessian_mults",
               "cg_steps", "expansion_steps", "proportioning_steps", "converged",
               "projected_gradient_norm")

SOURCES = ("qp-file", "svm-dataset", "obstacle", "eq-toy")


# -- generators ----------------------------------------------------------------

def generate_obstacle(nx: int, ny: int, load: float, obstacle: float) -> BoxQP:
    """Membrane over an obstacle on the unit square.

    ``nx`` and ``ny`` count grid cells, so there are ``(nx-1)(ny-1)`` interior
    unknowns. The Hessian is ``hx*hy`` times the 5-point Dirichlet Laplacian,
    the right-hand side ``load*hx*hy`` and the lower bound ``obstacle``.
    """
    if nx < 2 or ny < 2:
        raise ValueError(f"grid needs nx, ny >= 2 (got {nx}, {ny})")
    hx, hy = 1.0 / nx, 1.0 / ny
    mx, my = nx - 1, ny - 1
    tx = sp.diags([-np.ones(mx - 1), 2 * np.ones(mx), -np.ones(mx - 1)], [-1, 0, 1])
    ty = sp.diags([-np.ones(my - 1), 2 * np.ones(my), -np.ones(my - 1)], [-1, 0, 1])
    a = (hy / hx) * sp.kron(sp.identity(my), tx) + (hx / hy) * sp.kron(ty, sp.identity(mx))
    n = mx * my
    op = sparse_operator(a)
    op.name = f"obstacle{nx}x{ny}"
    return BoxQP(op, np.full(n, load * hx * hy), np.full(n, float(obstacle)), None)


def generate_eq_toy(n: int, m: int, seed: int, max_retries: int = 10) -> BoxQP:
    """Random SPD QP on ``[-1, 1]^n`` with ``m`` equalities satisfied inside the box.

    ``A = B^T B / n + I / 10``; ``e = G x_hat`` for ``x_hat`` drawn from
    ``[-1/2, 1/2]^n``. ``m = 0`` gives a plain box QP.
    """
    if n < 1 or m < 0 or (m > 0 and m >= n):
        raise ValueError(f"need n >= 1 and 0 <= m < n (got n={n}, m={m})")
    rng = np.random.default_rng(seed)
    bmat = rng.standard_normal((n, n))
    a = bmat.T @ bmat / n + 0.1 * np.eye(n)
    a = 0.5 * (a + a.T)
    rhs = rng.standard_normal(n)
    lower, upper = -np.ones(n), np.ones(n)
    x_hat = rng.uniform(-0.5, 0.5, n)
    if m == 0:
        return BoxQP(dense_operator(a), rhs, lower, upper)
    for _ in range(max_retries):
        g = rng.standard_normal((m, n))
        if np.linalg.matrix_rank(g) == m:
            return BoxQP(dense_operator(a), rhs, lower, upper, g, g @ x_hat)
    raise ValueError(f"could not draw a full-rank G in {max_retries} attempts")


# -- sweeps ---------------------------------------------------------------------

@dataclass
class SweepSpec:
    """What to sweep.

    ``params`` depends on ``source``: ``path`` for qp-file; ``data``, ``loss``,
    ``C``, ``beta`` for svm-dataset; ``nx``, ``ny``, ``load``, ``obstacle``
    for obstacle; ``n``, ``m`` for eq-toy (which uses ``seed``).
    """

    source: str
    params: dict = field(default_factory=dict)
    strategies: Sequence[str] = DEFAULT_STRATEGIES
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID
    rtol: float = 1e-6
    gamma: float = 1.0
    max_hessian_mults: int = 100_000
    seed: int = 0
    workers: int = 1
    benchmark: Optional[str] = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if not self.strategies:
            raise ValueError("strategy list is empty")
        for name in self.strategies:
            parse_strategy(name)
        for a in self.alpha_grid:
            if not 0 < a <= 2:
                raise ValueError(f"alpha_u grid value {a} outside (0, 2]")


@dataclass
class SweepRow:
    benchmark: str
    strategy: str
    alpha_u: Optional[float]
    outer_iterations: int
    hessian_mults: int
    cg_steps: int
    expansion_steps: int
    proportioning_steps: int
    converged: bool
    projected_gradient_norm: float
    # not part of the CSV
    setup_mults: int = field(default=1, compare=False)
    norm_mults: int = field(default=0, compare=False)
    seconds: float = field(default=0.0, compare=False)
    error: Optional[str] = field(default=None, compare=False)


@dataclass
class Benchmark:
    name: str
    problem: BoxQP
    x0: np.ndarray
    note: str = ""


def resolve(spec: SweepSpec) -> Benchmark:
    """Build the problem and starting point a spec refers to."""
    p = spec.params
    if spec.source == "qp-file":
        prob = load_problem(p["path"])
        return Benchmark(spec.benchmark or str(p["path"]), prob, _start(prob))
    if spec.source == "obstacle":
        prob = generate_obstacle(int(p["nx"]), int(p["ny"]), float(p["load"]), float(p["obstacle"]))
        name = spec.benchmark or f"obstacle-{p['nx']}x{p['ny']}"
        return Benchmark(name, prob, _start(prob),
                         "desk-scale obstacle stand-in, not a domain-decomposition contact run")
    if spec.source == "eq-toy":
        prob = generate_eq_toy(int(p["n"]), int(p["m"]), spec.seed)
        return Benchmark(spec.benchmark or f"eq-toy-n{p['n']}-m{p['m']}-s{spec.seed}",
                         prob, _start(prob))
    from . import svm

    data = p["data"]
    if isinstance(data, str):
        data = svm.load_dataset(data)
    loss, C, beta = p.get("loss", "l1"), float(p.get("C", 1.0)), float(p.get("beta", 1.0))
    prob = svm.build_dual(svm.augment_nobias(data, beta), loss, C)
    return Benchmark(spec.benchmark or "svm", prob, svm.initial_guess(loss, C, data.sample_count))


def _start(problem: BoxQP) -> np.ndarray:
    return project(problem, np.zeros(problem.n))


def sweep_points(spec: SweepSpec) -> list[tuple[str, Optional[float]]]:
    """``(strategy, alpha_u)`` pairs in output order; projcg appears once with no alpha."""
    grid = sorted(set(float(a) for a in spec.alpha_grid))
    points = []
    for name in spec.strategies:
        if parse_strategy(name).kind == "projcg":
            points.append((name, None))
        else:
            points.extend((name, a) for a in grid)
    return points


def run_sweep(spec: SweepSpec, bench: Optional[Benchmark] = None,
              step_hook: Optional[Callable] = None) -> list[SweepRow]:
    """Run every sweep point; failures become unconverged rows with ``error`` set.

    ``||A||`` is estimated once (power iteration seeded by ``spec.seed``); its
    cost is stored in each row's ``norm_mults`` and not in ``hessian_mults``.
    ``step_hook(strategy, alpha_u)`` may return a per-step callback for that
    run (box-only problems).
    """
    bench = bench or resolve(spec)
    est = estimate_norm(bench.problem.operator.clone(), seed=spec.seed)
    points = sweep_points(spec)

    def one(point):
        callback = step_hook(*point) if step_hook is not None else None
        return _run_point(spec, bench, est.value, point, est.mults_spent, callback)

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(one, points))
    return [one(pt) for pt in points]


def _run_point(spec, bench, norm_A, point, norm_mults, callback=None) -> SweepRow:
    name, alpha = point
    strategy = parse_strategy(name, alpha if alpha is not None else 1.0)
    problem = bench.problem.with_operator(bench.problem.operator.clone())
    t0 = time.perf_counter()
    try:
        inner = SolverConfig(gamma=spec.gamma, rtol=spec.rtol,
                             max_hessian_mults=spec.max_hessian_mults, strategy=strategy,
                             norm_A=norm_A)
        if problem.has_equalities:
            rep = solve_equality(problem, bench.x0,
                                 SmalbeConfig(outer_rtol=spec.rtol, inner=inner, norm_A=norm_A))
        else:
            rep = solve(problem, bench.x0, inner, callback=callback)
    except (ArithmeticError, ValueError) as exc:
        return SweepRow(bench.name, name, alpha, 0, problem.operator.mult_counter, 0, 0, 0,
                        False, math.nan, norm_mults=norm_mults,
                        seconds=time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")
    return SweepRow(bench.name, name, alpha, rep.outer_iterations, rep.hessian_mults,
                    rep.cg_steps, rep.expansion_steps, rep.proportioning_steps, rep.converged,
                    rep.projected_gradient_norm, setup_mults=rep.setup_mults,
                    norm_mults=norm_mults + rep.norm_mults, seconds=time.perf_counter() - t0)


def expansion_cost(strategy: str) -> int:
    return STEP_COST[f"expansion-{parse_strategy(strategy).kind}"]


# -- output -----------------------------------------------------------------------

def _fmt_alpha(a: Optional[float], blank: str, exact: bool = False) -> str:
    if a is None:
        return blank
    return repr(float(a)) if exact else f"{a:g}"


def emit(rows: Sequence[SweepRow], fmt: str = "csv", title: Optional[str] = None) -> str:
    """Render rows as CSV (header + one line per row) or a markdown table."""
    if not rows:
        raise ValueError("nothing to emit")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.benchmark, r.strategy, _fmt_alpha(r.alpha_u, "", exact=True), r.outer_iterations,
                        r.hessian_mults, r.cg_steps, r.expansion_steps, r.proportioning_steps,
                        "true" if r.converged else "false", repr(float(r.projected_gradient_norm))])
        return buf.getvalue()
    if fmt == "markdown":
        lines = [f"**{title}**", ""] if title else []
        lines.append("| benchmark | strategy | alpha_u | outer it. | #Hess. mult. | #CG | #Exp. "
                     "| #Prop. | converged | norm(g^P) |")
        lines.append("|---|---|---:|---:|---:|---:|---:|---:|---|---:|")
        for r in rows:
            lines.append(f"| {r.benchmark} | {r.strategy} | {_fmt_alpha(r.alpha_u, '-')} "
                         f"| {r.outer_iterations} | {r.hessian_mults} | {r.cg_steps} "
                         f"| {r.expansion_steps} | {r.proportioning_steps} "
                         f"| {'yes' if r.converged else 'no'} | {r.projected_gradient_norm:.3e} |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_csv(text: str) -> list[SweepRow]:
    """Inverse of ``emit(rows, "csv")`` on the CSV columns."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        rows.append(SweepRow(rec[0], rec[1], float(rec[2]) if rec[2] else None, int(rec[3]),
                             int(rec[4]), int(rec[5]), int(rec[6]), int(rec[7]),
                             rec[8] == "true", float(rec[9])))
    return rows
