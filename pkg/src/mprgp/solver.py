"""MPRGP for convex box-constrained QPs with pluggable expansion steps.

One iteration is a CG step, an expansion step or a proportioning step.
Hessian applications per step are fixed:

=====================  ===========
step                   Hess. mult.
=====================  ===========
CG                     1
proportioning          1
expansion (fixed)      2
expansion (optapprox)  2
expansion (opt)        3
expansion (projcg)     2
=====================  ===========

plus one application for the initial gradient. :class:`SolveReport`
carries the totals; a ``callback`` receives a :class:`StepRecord` per step
for finer inspection.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linop import estimate_norm
from .problem import BoxQP, GradientSplit, InfeasiblePointError, split_gradient

KINDS = ("fixed", "optapprox", "opt", "projcg")
VECTORS = ("gf", "gr")

#: Hessian applications per completed step, keyed by step label.
STEP_COST = {
    "cg": 1,
    "proportioning": 1,
    "expansion-fixed": 2,
    "expansion-optapprox": 2,
    "expansion-opt": 3,
    "expansion-projcg": 2,
}


class SolverError(ArithmeticError):
    """Raised when a curvature term that must be positive is not."""


@dataclass(frozen=True)
class ExpansionStrategy:
    """How the expansion step chooses its length and direction.

    ``steplen_vector`` is the vector ``d`` fed to the step-length formula,
    ``direction_vector`` the vector the line search moves along. Both are
    ignored by ``fixed`` (which always steps along the free gradient and
    projects) and the whole record except ``kind`` is ignored by ``projcg``.
    """

    kind: str = "fixed"
    steplen_vector: str = "gf"
    direction_vector: str = "gf"
    alpha_u: float = 1.9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown expansion kind {self.kind!r}")
        if self.steplen_vector not in VECTORS or self.direction_vector not in VECTORS:
            raise ValueError("steplen_vector and direction_vector must be 'gf' or 'gr'")
        if self.kind != "projcg" and not 0 < self.alpha_u <= 2:
            raise ValueError(f"alpha_u must lie in (0, 2], got {self.alpha_u}")

    @property
    def name(self) -> str:
        return strategy_name(self)

    @property
    def uses_reduced(self) -> bool:
        if self.kind == "projcg":
            return False
        if self.kind == "fixed":
            return False
        return "gr" in (self.steplen_vector, self.direction_vector)

    @property
    def needs_norm(self) -> bool:
        return self.kind in ("fixed", "optapprox") or self.uses_reduced


def strategy_name(strategy: ExpansionStrategy) -> str:
    if strategy.kind in ("fixed", "projcg"):
        return strategy.kind
    return f"{strategy.direction_vector}{strategy.steplen_vector}-{strategy.kind}"


_NAME_RE = re.compile(r"^(gf|gr)(gf|gr)-(optapprox|opt)$")


def parse_strategy(name: str, alpha_u: float = 1.9) -> ExpansionStrategy:
    """Inverse of :func:`strategy_name`; ``"gfgr-opt"`` steps along g^f with a length from g^r."""
    key = name.strip().lower()
    if key in ("fixed", "projcg"):
        return ExpansionStrategy(kind=key, alpha_u=alpha_u if key == "fixed" else 1.0)
    m = _NAME_RE.match(key)
    if m is None:
        raise ValueError(f"unknown expansion strategy {name!r}")
    direction, steplen, kind = m.groups()
    return ExpansionStrategy(kind=kind, steplen_vector=steplen, direction_vector=direction,
                             alpha_u=alpha_u)


#: The seven variants compared in the benchmark tables.
DEFAULT_STRATEGIES = ("fixed", "grgr-optapprox", "gfgr-optapprox", "grgr-opt", "gfgr-opt",
                    "gfgf-opt", "projcg")


@dataclass
class SolverConfig:
    gamma: float = 1.0
    rtol: float = 1e-6
    atol: float = 0.0
    max_hessian_mults: int = 100_000
    strategy: ExpansionStrategy = field(default_factory=ExpansionStrategy)
    norm_A: Optional[float] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.rtol < 0 or self.atol < 0 or not (self.rtol > 0 or self.atol > 0):
            raise ValueError("need rtol > 0 or atol > 0 (both nonnegative)")
        if self.max_hessian_mults < 1:
            raise ValueError("max_hessian_mults must be >= 1")
        if self.norm_A is not None and not self.norm_A > 0:
            raise ValueError("norm_A must be positive")


@dataclass
class SolveReport:
    x: np.ndarray
    converged: bool
    projected_gradient_norm: float
    hessian_mults: int
    cg_steps: int = 0
    expansion_steps: int = 0
    proportioning_steps: int = 0
    outer_iterations: int = 1
    dot_products: int = 0
    vector_updates: int = 0
    gradient_splittings: int = 0
    final_cost: float = float("nan")
    #: applications outside the steps themselves (initial gradient evaluations)
    setup_mults: int = 1
    #: applications spent estimating ||A|| inside this call (not in hessian_mults)
    norm_mults: int = 0

    @property
    def iterations(self) -> int:
        return self.cg_steps + self.expansion_steps + self.proportioning_steps


@dataclass
class StepRecord:
    """What one MPRGP step did; handed to ``solve(..., callback=...)``."""

    kind: str
    hessian_mults: int
    active_before: np.ndarray
    active_after: np.ndarray
    cost_before: float
    cost_after: float
    x_before: np.ndarray
    x_after: np.ndarray
    # expansion line-search data (fixed/optapprox/opt only)
    x_half: Optional[np.ndarray] = None
    g_half: Optional[np.ndarray] = None
    split_half: Optional[GradientSplit] = None
    alpha_bar: Optional[float] = None


def max_feasible_step(x, p, lower, upper) -> float:
    """Largest ``alpha >= 0`` with ``x - alpha * p`` inside ``[lower, upper]``."""
    steps = _exit_steps(np.asarray(x, float), np.asarray(p, float), lower, upper)
    return float(steps.min()) if steps.size else math.inf


def _exit_steps(x, p, lower, upper):
    steps = np.full(x.shape, np.inf)
    pos = p > 0
    neg = p < 0
    with np.errstate(invalid="ignore", over="ignore"):
        steps[pos] = (x[pos] - lower[pos]) / p[pos]
        steps[neg] = (x[neg] - upper[neg]) / p[neg]
    # rounding can make an on-bound component report a tiny negative step
    np.maximum(steps, 0.0, out=steps)
    return steps


def _step_to_boundary(x, p, alpha, steps, lower, upper):
    """``x - alpha p`` with every blocking component set exactly to its bound."""
    y = x - alpha * p
    hit = steps <= alpha
    lo = hit & (p > 0)
    hi = hit & (p < 0)
    y[lo] = lower[lo]
    y[hi] = upper[hi]
    return np.minimum(upper, np.maximum(lower, y))


def expansion_step_length(strategy: ExpansionStrategy, d: np.ndarray, g: np.ndarray,
                          norm_A: Optional[float], Ad: Optional[np.ndarray] = None) -> float:
    """Step length of a fixed/optapprox/opt expansion for step-length vector ``d``.

    ``Ad`` is required for ``opt``. Returns 0 when ``d`` vanishes.
    """
    kind = strategy.kind
    if kind == "fixed":
        return strategy.alpha_u / norm_A
    dd = float(np.dot(d, d))
    if dd == 0.0:
        return 0.0
    dg = float(np.dot(d, g))
    if kind == "optapprox":
        return strategy.alpha_u / norm_A * (dg / dd)
    if kind == "opt":
        dAd = float(np.dot(d, Ad))
        if dAd <= 0.0:
            raise SolverError(f"d^T A d = {dAd:.3e} <= 0 in opt expansion; Hessian not positive on d")
        return strategy.alpha_u * dg / dAd
    raise ValueError(f"no line-search step length for kind {kind!r}")


def solve(problem: BoxQP, x0, config: Optional[SolverConfig] = None,
          callback: Optional[Callable[[StepRecord], None]] = None,
          stop_rule: Optional[Callable[[np.ndarray, float], bool]] = None) -> SolveReport:
    """Minimize ``problem`` over its box starting from the feasible ``x0``.

    Equality constraints are not handled here (see :mod:`mprgp.smalbe`).
    Stops when ``||g^P|| <= max(rtol * ||b||, atol)`` or when the Hessian
    budget is spent; the latter is reported through ``converged=False``.
    ``stop_rule(x, ||g^P||)`` replaces the tolerance test when given.
    """
    config = config or SolverConfig()
    if problem.has_equalities:
        raise ValueError("problem has equality constraints; use mprgp.smalbe.solve_equality")
    strat = config.strategy
    op = problem.operator
    b, lower, upper = problem.rhs, problem.lower, problem.upper
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape != (problem.n,):
        raise ValueError(f"x0 has length {x.shape[0]}, expected {problem.n}")
    if not problem.is_feasible(x):
        raise InfeasiblePointError("x0 is not feasible; project it first")

    norm_A = config.norm_A
    norm_mults = 0
    if norm_A is None and strat.needs_norm:
        est = estimate_norm(op)
        norm_A, norm_mults = est.value, est.mults_spent
    alpha_ref = strat.alpha_u / norm_A if strat.uses_reduced else None

    tol = max(config.rtol * float(np.linalg.norm(b)), config.atol)
    gamma2 = config.gamma ** 2
    budget = config.max_hessian_mults
    start = op.mult_counter
    counts = dict(cg=0, exp=0, prop=0, dots=0, updates=0, splits=0)

    def split(xv, gv):
        counts["splits"] += 1
        return split_gradient(problem, xv, gv, alpha_ref, check=False)

    def f_of(xv, gv):
        # f = 1/2 x^T (Ax) - x^T b with Ax = g + b; no operator application
        return 0.5 * float(xv @ (gv - b))

    g = op.apply(x) - b
    s = split(x, g)
    p = s.free.copy()
    converged = False

    if stop_rule is None:
        def stop_rule(_x, pnorm):
            return pnorm <= tol

    while True:
        if stop_rule(x, s.projected_norm):
            converged = True
            break
        if op.mult_counter - start >= budget:
            break

        step_start = op.mult_counter
        x_prev = x
        active_prev = s.active
        extra = {}
        gf, gc = s.free, s.chopped
        counts["dots"] += 2
        if gc @ gc <= gamma2 * (gf @ gf):
            Ap = op.apply(p)
            pAp = float(p @ Ap)
            counts["dots"] += 2
            if pAp <= 0.0:
                raise SolverError(f"p^T A p = {pAp:.3e} <= 0; Hessian not positive definite on search direction")
            a_cg = float(g @ p) / pAp
            steps = _exit_steps(x, p, lower, upper)
            a_f = float(steps.min()) if steps.size else math.inf

            if a_cg <= a_f:
                # CG step
                x = x - a_cg * p
                if a_cg == a_f:
                    x = _step_to_boundary(x_prev, p, a_cg, steps, lower, upper)
                elif problem.has_bounds:
                    x = np.minimum(upper, np.maximum(lower, x))
                g = g - a_cg * Ap
                s = split(x, g)
                beta = float(Ap @ s.free) / pAp
                p = s.free - beta * p
                counts["cg"] += 1
                counts["dots"] += 1
                counts["updates"] += 3
                kind = "cg"
            elif strat.kind == "projcg":
                x = np.minimum(upper, np.maximum(lower, x - a_cg * p))
                g = op.apply(x) - b
                s = split(x, g)
                p = s.free.copy()
                counts["exp"] += 1
                counts["updates"] += 3
                kind = "expansion-projcg"
            else:
                x_half = _step_to_boundary(x, p, a_f, steps, lower, upper)
                g_half = g - a_f * Ap
                s_half = split(x_half, g_half)
                d = s_half.free if strat.steplen_vector == "gf" or strat.kind == "fixed" else s_half.reduced_free
                Ad = op.apply(d) if strat.kind == "opt" else None
                a_bar = expansion_step_length(strat, d, g_half, norm_A, Ad)
                if strat.kind == "fixed" or strat.direction_vector == "gf":
                    y = x_half - a_bar * s_half.free
                else:
                    dt = s_half.reduced_free
                    y = x_half - a_bar * dt
                    if a_bar >= alpha_ref:
                        # capped components reach their bound exactly at alpha_ref
                        capped = (dt != s_half.free)
                        y[capped & (dt > 0)] = lower[capped & (dt > 0)]
                        y[capped & (dt < 0)] = upper[capped & (dt < 0)]
                x = np.minimum(upper, np.maximum(lower, y))
                g = op.apply(x) - b
                s = split(x, g)
                p = s.free.copy()
                counts["exp"] += 1
                counts["dots"] += {"fixed": 0, "optapprox": 2, "opt": 3}[strat.kind]
                counts["updates"] += 5
                kind = f"expansion-{strat.kind}"
                extra = dict(x_half=x_half, g_half=g_half, split_half=s_half, alpha_bar=a_bar)
        else:
            Agc = op.apply(gc)
            den = float(gc @ Agc)
            if den <= 0.0:
                raise SolverError(f"g_c^T A g_c = {den:.3e} <= 0 in proportioning step")
            a_cg = float(g @ gc) / den
            steps = _exit_steps(x, gc, lower, upper)
            a_max = float(steps.min())
            if a_cg >= a_max:
                # releasing step would cross the opposite bound: stop on it
                a_cg = a_max
                x = _step_to_boundary(x, gc, a_cg, steps, lower, upper)
            else:
                x = np.minimum(upper, np.maximum(lower, x - a_cg * gc))
            g = g - a_cg * Agc
            s = split(x, g)
            p = s.free.copy()
            counts["prop"] += 1
            counts["dots"] += 2
            counts["updates"] += 3
            kind = "proportioning"

        if callback is not None:
            callback(StepRecord(kind=kind, hessian_mults=op.mult_counter - step_start,
                                active_before=active_prev, active_after=s.active,
                                cost_before=_cost_dense(problem, x_prev),
                                cost_after=_cost_dense(problem, x),
                                x_before=x_prev, x_after=x, **extra))

    return SolveReport(
        x=x, converged=converged, projected_gradient_norm=s.projected_norm,
        hessian_mults=op.mult_counter - start,
        cg_steps=counts["cg"], expansion_steps=counts["exp"], proportioning_steps=counts["prop"],
        outer_iterations=1, dot_products=counts["dots"], vector_updates=counts["updates"],
        gradient_splittings=counts["splits"], final_cost=f_of(x, g), setup_mults=1,
        norm_mults=norm_mults,
    )


def _cost_dense(problem: BoxQP, x) -> float:
    # bypasses the counter so tracing never perturbs the accounting
    ax = problem.operator._matvec(x)
    return 0.5 * float(x @ ax) - float(x @ problem.rhs)
