"""Box-constrained QP representation and feasibility geometry.

The problem is ``min 1/2 x^T A x - x^T b`` subject to ``l <= x <= u`` and,
optionally, ``G x = e``. Missing bounds are stored as +/-inf so every
formula below treats them as "interior on that side".

Activity is decided by exact floating-point equality with a bound. The
solver only ever writes bound values by assignment (projection, clamping),
never as a computed near-value, which keeps the equality test meaningful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linop import LinearOperator, dense_operator


class InfeasiblePointError(ValueError):
    pass


class BoxQP:
    """``min 1/2 x^T A x - x^T b`` over a box, with optional ``G x = e``.

    ``lower``/``upper`` default to -inf/+inf. ``operator`` is any
    :class:`~mprgp.linop.LinearOperator`; it is never materialized.
    """

    def __init__(self, operator: LinearOperator, rhs, lower=None, upper=None,
                 eq_matrix=None, eq_rhs=None):
        n = operator.dim
        self.operator = operator
        self.rhs = _vector(rhs, n, "rhs")
        self.lower = np.full(n, -np.inf) if lower is None else _vector(lower, n, "lower")
        self.upper = np.full(n, np.inf) if upper is None else _vector(upper, n, "upper")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not contain NaN")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("lower bound +inf or upper bound -inf leaves no feasible point")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if (eq_matrix is None) != (eq_rhs is None):
            raise ValueError("eq_matrix and eq_rhs must be given together")
        if eq_matrix is not None:
            g = np.atleast_2d(np.asarray(eq_matrix, dtype=float))
            if g.size == 0:
                g = np.zeros((0, n))
            e = np.asarray(eq_rhs, dtype=float).reshape(-1)
            if g.shape[1] != n or g.shape[0] != e.shape[0]:
                raise ValueError(f"equality constraints have shapes {g.shape} and {e.shape} for n={n}")
            self.eq_matrix, self.eq_rhs = g, e
        else:
            self.eq_matrix = self.eq_rhs = None

    @property
    def n(self) -> int:
        return self.operator.dim

    @property
    def has_equalities(self) -> bool:
        return self.eq_matrix is not None and self.eq_matrix.shape[0] > 0

    @property
    def has_bounds(self) -> bool:
        return bool(np.isfinite(self.lower).any() or np.isfinite(self.upper).any())

    def box_only(self) -> "BoxQP":
        return BoxQP(self.operator, self.rhs, self.lower, self.upper)

    def with_operator(self, operator: LinearOperator) -> "BoxQP":
        return BoxQP(operator, self.rhs, self.lower, self.upper, self.eq_matrix, self.eq_rhs)

    def is_feasible(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def _vector(v, n, what):
    a = np.array(v, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise ValueError(f"{what} has length {a.shape[0]}, expected {n}")
    return a


def _check_length(problem: BoxQP, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"x has shape {x.shape}, expected ({problem.n},)")
    return x


def cost(problem: BoxQP, x) -> float:
    x = _check_length(problem, x)
    return float(0.5 * (x @ problem.operator.apply(x)) - x @ problem.rhs)


def gradient(problem: BoxQP, x) -> np.ndarray:
    x = _check_length(problem, x)
    return problem.operator.apply(x) - problem.rhs


def project(problem: BoxQP, x) -> np.ndarray:
    """Component-wise clamp onto ``[l, u]``; bound values are copied exactly."""
    x = _check_length(problem, x)
    return np.minimum(problem.upper, np.maximum(problem.lower, x))


@dataclass
class GradientSplit:
    """Free, reduced free and chopped parts of a gradient at a feasible point.

    ``reduced_free`` is ``None`` when no reference step length was given.
    """

    free: np.ndarray
    reduced_free: Optional[np.ndarray]
    chopped: np.ndarray
    projected_norm: float
    at_lower: np.ndarray
    at_upper: np.ndarray

    @property
    def projected(self) -> np.ndarray:
        return self.free + self.chopped

    @property
    def active(self) -> np.ndarray:
        return self.at_lower | self.at_upper


def split_gradient(problem: BoxQP, x, g, alpha_bar: Optional[float] = None,
                   check: bool = True) -> GradientSplit:
    x = _check_length(problem, x)
    g = np.asarray(g, dtype=float)
    l, u = problem.lower, problem.upper
    if check and not problem.is_feasible(x):
        raise InfeasiblePointError("split_gradient requires a feasible point")
    at_lower = x == l
    at_upper = x == u
    active = at_lower | at_upper
    free = np.where(active, 0.0, g)

    # Equal bounds are permanently active and never released.
    chopped = np.zeros_like(g)
    releasable = l != u
    lo = at_lower & releasable
    hi = at_upper & releasable
    chopped[lo] = np.minimum(g[lo], 0.0)
    chopped[hi] = np.maximum(g[hi], 0.0)

    reduced = None
    if alpha_bar is not None:
        if not alpha_bar > 0:
            raise ValueError("alpha_bar must be positive")
        reduced = np.zeros_like(g)
        pos = ~active & (g > 0)
        neg = ~active & (g <= 0)
        reduced[pos] = np.minimum((x[pos] - l[pos]) / alpha_bar, g[pos])
        reduced[neg] = np.maximum((x[neg] - u[neg]) / alpha_bar, g[neg])

    pnorm = float(np.sqrt(free @ free + chopped @ chopped))
    return GradientSplit(free, reduced, chopped, pnorm, at_lower, at_upper)


@dataclass(frozen=True)
class ActiveSetSnapshot:
    at_lower: frozenset
    at_upper: frozenset

    @property
    def indices(self) -> frozenset:
        return self.at_lower | self.at_upper


def active_set(problem: BoxQP, x) -> ActiveSetSnapshot:
    x = _check_length(problem, x)
    if not problem.is_feasible(x):
        raise InfeasiblePointError("active_set requires a feasible point")
    return ActiveSetSnapshot(frozenset(np.flatnonzero(x == problem.lower).tolist()),
                             frozenset(np.flatnonzero(x == problem.upper).tolist()))


# -- JSON problem files -------------------------------------------------------

def _bound_from_json(values, n, what):
    if values is None:
        return None
    out = []
    for v in values:
        if isinstance(v, str):
            key = v.strip().lower()
            if key in ("inf", "+inf", "infinity"):
                out.append(np.inf)
            elif key in ("-inf", "-infinity"):
                out.append(-np.inf)
            else:
                raise ValueError(f"{what}: unrecognized bound literal {v!r}")
        else:
            out.append(float(v))
    return _vector(out, n, what)


def problem_from_dict(doc: dict) -> BoxQP:
    try:
        n = int(doc["n"])
        a = np.array(doc["A"], dtype=float).reshape(n, n)
        b = doc["b"]
    except KeyError as exc:
        raise ValueError(f"problem file is missing field {exc}") from None
    g, e = doc.get("G"), doc.get("e")
    if g is not None:
        g = np.array(g, dtype=float).reshape(-1, n)
    return BoxQP(dense_operator(a), b,
                 _bound_from_json(doc.get("l"), n, "l"),
                 _bound_from_json(doc.get("u"), n, "u"),
                 g, e)


def load_problem(path) -> BoxQP:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def _bound_to_json(v, absent):
    if np.all(v == absent):
        return None
    return [("inf" if x > 0 else "-inf") if np.isinf(x) else float(x) for x in v]


def problem_to_dict(problem: BoxQP) -> dict:
    """Serialize a problem; the operator is materialized densely."""
    return {
        "n": problem.n,
        "A": problem.operator.to_dense().tolist(),
        "b": problem.rhs.tolist(),
        "l": _bound_to_json(problem.lower, -np.inf),
        "u": _bound_to_json(problem.upper, np.inf),
        "G": None if problem.eq_matrix is None else problem.eq_matrix.tolist(),
        "e": None if problem.eq_rhs is None else problem.eq_rhs.tolist(),
    }
