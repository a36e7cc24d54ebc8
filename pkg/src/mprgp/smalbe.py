"""Augmented-Lagrangian outer loop for box QPs with linear equalities.

Each outer iteration minimizes, over the box,

    L(x, mu, M) = f(x) + mu^T (G x - e) + M/2 ||G x - e||^2

with MPRGP, warm-started from the previous iterate, then updates
``mu <- mu + M (G x - e)``. The same constant ``M`` is the penalty and the
factor in the inner stopping bound ``||g^P|| <= min(M ||Gx - e||, eta_abs)``.
``M`` is divided by ``M_reduction`` whenever the Lagrangian decreased
sufficiently, ``L_k <= L_{k-1} + M/2 ||G x_k - e||^2``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linop import LinearOperator, WrappedOperator, estimate_norm
from .problem import BoxQP, InfeasiblePointError
from .solver import SolveReport, SolverConfig, solve


class RankDeficientError(ValueError):
    pass


@dataclass
class SmalbeConfig:
    """Outer-loop parameters.

    ``M0`` and ``eta`` default to ``100 ||A||`` and ``1.1 ||A||``. ``eta`` is
    rescaled by ``outer_rtol ||b|| / ||A||`` so the inner cap is measured in
    the same units as the final gradient tolerance.
    """

    M0: Optional[float] = None
    eta: Optional[float] = None
    M_reduction: float = 10.0
    outer_rtol: float = 1e-6
    inner: SolverConfig = field(default_factory=SolverConfig)
    max_outer: int = 100
    norm_A: Optional[float] = None

    def __post_init__(self):
        for name in ("M0", "eta", "norm_A"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if not self.M_reduction > 1:
            raise ValueError("M_reduction must exceed 1")
        if not self.outer_rtol > 0:
            raise ValueError("outer_rtol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class SmalbeReport(SolveReport):
    """A :class:`SolveReport` summed over all inner solves plus outer-loop state."""

    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    feasibility_norm: float = 0.0
    penalties: list = field(default_factory=list)
    inner_reports: list = field(default_factory=list)


def augmented_operator(base: LinearOperator, G, M: float) -> LinearOperator:
    """``v -> base(v) + M G^T (G v)``, one base application per call."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[1] != base.dim:
        raise ValueError(f"G has {G.shape[1]} columns, operator dimension is {base.dim}")
    if M < 0:
        raise ValueError("M must be nonnegative")
    M = float(M)
    return WrappedOperator(base, lambda v: M * (G.T @ (G @ v)), f"{base.name}+{M:g}G'G")


def check_full_row_rank(G) -> None:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[0] == 0:
        return
    sv = np.linalg.svd(G, compute_uv=False)
    tol = max(G.shape) * np.finfo(float).eps * sv[0]
    rank = int(np.sum(sv > tol))
    if rank < G.shape[0]:
        raise RankDeficientError(f"G has {G.shape[0]} rows but rank {rank}")


def solve_equality(problem: BoxQP, x0, config: Optional[SmalbeConfig] = None) -> SmalbeReport:
    """Minimize ``problem`` subject to its box and ``G x = e``.

    Without equality rows this is a plain MPRGP solve at ``outer_rtol``.
    Hessian counts are totals of the inner solves; ``norm_mults`` collects
    the power iterations for ``||A||`` and for each penalized Hessian.
    """
    config = config or SmalbeConfig()
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape != (problem.n,):
        raise ValueError(f"x0 has length {x.shape[0]}, expected {problem.n}")
    if not problem.is_feasible(x):
        raise InfeasiblePointError("x0 is not feasible for the box")

    b = problem.rhs
    bnorm = float(np.linalg.norm(b))
    # absolute tolerance when b vanishes
    eps_g = config.outer_rtol * bnorm if bnorm > 0 else config.outer_rtol
    inner_base = dataclasses.replace(config.inner, rtol=config.outer_rtol if bnorm > 0 else 0.0,
                                     atol=0.0 if bnorm > 0 else config.outer_rtol)

    if not problem.has_equalities:
        rep = solve(problem.box_only(), x, inner_base)
        return SmalbeReport(**_fields(rep), inner_reports=[rep])

    G, e = problem.eq_matrix, problem.eq_rhs
    check_full_row_rank(G)
    enorm = float(np.linalg.norm(e))
    eps_e = config.outer_rtol * enorm if enorm > 0 else config.outer_rtol

    norm_mults = 0
    norm_A = config.norm_A
    if norm_A is None:
        est = estimate_norm(problem.operator.clone())
        norm_A, norm_mults = est.value, est.mults_spent
    M = config.M0 if config.M0 is not None else 100.0 * norm_A
    eta = config.eta if config.eta is not None else 1.1 * norm_A
    eta_abs = eta * eps_g / norm_A

    mu = np.zeros(G.shape[0])
    budget = config.inner.max_hessian_mults
    totals = dict(hessian_mults=0, cg_steps=0, expansion_steps=0, proportioning_steps=0,
                  dot_products=0, vector_updates=0, gradient_splittings=0, setup_mults=0)
    reports, penalties = [], []
    L_prev = None
    converged = False
    outer = 0
    pnorm = np.inf

    def feas(v):
        return float(np.linalg.norm(G @ v - e))

    while outer < config.max_outer and totals["hessian_mults"] < budget:
        outer += 1
        penalties.append(M)
        op = augmented_operator(problem.operator, G, M)
        rhs = b - G.T @ mu + M * (G.T @ e)
        inner_cfg = dataclasses.replace(inner_base,
                                        max_hessian_mults=budget - totals["hessian_mults"],
                                        norm_A=None)
        if inner_cfg.strategy.needs_norm:
            est = estimate_norm(op.clone())
            inner_cfg.norm_A = est.value
            norm_mults += est.mults_spent
        M_now = M

        def stop(xv, pn):
            r = feas(xv)
            return pn <= min(M_now * r, eta_abs) or (pn <= eps_g and r <= eps_e)

        rep = solve(BoxQP(op, rhs, problem.lower, problem.upper), x, inner_cfg, stop_rule=stop)
        reports.append(rep)
        for k in totals:
            totals[k] += getattr(rep, k)
        x = rep.x
        pnorm = rep.projected_gradient_norm
        r = G @ x - e
        rn = float(np.linalg.norm(r))
        L_now = _lagrangian(problem, mu, M, rep)
        mu = mu + M * r
        if pnorm <= eps_g and rn <= eps_e:
            converged = True
            break
        if L_prev is not None and L_now <= L_prev + 0.5 * M * rn * rn:
            M = M / config.M_reduction
        L_prev = L_now

    return SmalbeReport(
        x=x, converged=converged, projected_gradient_norm=pnorm,
        outer_iterations=outer, final_cost=_plain_cost(problem, x),
        norm_mults=norm_mults, multipliers=mu, feasibility_norm=feas(x),
        penalties=penalties, inner_reports=reports, **totals)


def _fields(rep: SolveReport) -> dict:
    return {f.name: getattr(rep, f.name) for f in dataclasses.fields(SolveReport)}


def _lagrangian(problem, mu, M, rep) -> float:
    # rep.final_cost is the inner objective: f(x) + (Gx)^T(mu - M e) + M/2 ||Gx||^2;
    # adding the constant part gives L(x, mu, M).
    e = problem.eq_rhs
    return rep.final_cost - float(mu @ e) + 0.5 * M * float(e @ e)


def _plain_cost(problem: BoxQP, x) -> float:
    return 0.5 * float(x @ problem.operator._matvec(x)) - float(x @ problem.rhs)
