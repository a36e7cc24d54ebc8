"""Matrix-free symmetric operators with exact application counting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp


class LinearOperator:
    """Symmetric linear operator ``v -> A v`` of dimension ``n``.

    Every call to :meth:`apply` increments :attr:`mult_counter` by exactly
    one. Operators are cheap to :meth:`clone`, which gives an independent
    counter over the same arithmetic; benchmark runs clone so that counts
    stay exact when runs execute concurrently.
    """

    def __init__(self, dim: int, matvec: Callable[[np.ndarray], np.ndarray], name: str = "op"):
        if dim < 1:
            raise ValueError(f"operator dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.name = name
        self._matvec = matvec
        self.mult_counter = 0

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"{self.name}: expected vector of length {self.dim}, got shape {v.shape}")
        self.mult_counter += 1
        return self._matvec(v)

    __matmul__ = apply

    def clone(self) -> "LinearOperator":
        return LinearOperator(self.dim, self._matvec, self.name)

    def reset_counter(self) -> None:
        self.mult_counter = 0

    def to_dense(self) -> np.ndarray:
        """Materialize the matrix column by column (testing and small problems only).

        Does not touch the counter.
        """
        eye = np.eye(self.dim)
        return np.column_stack([self._matvec(eye[:, j]) for j in range(self.dim)])

    def __repr__(self) -> str:
        return f"LinearOperator(name={self.name!r}, dim={self.dim}, mults={self.mult_counter})"


@dataclass(frozen=True)
class NormEstimate:
    value: float
    iterations: int
    mults_spent: int


def dense_operator(matrix, sym_tol: float = 1e-12) -> LinearOperator:
    """Wrap a dense symmetric matrix."""
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(a - a.T).max(initial=0.0) > sym_tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return LinearOperator(a.shape[0], lambda v: a @ v, name="dense")


def sparse_operator(matrix, sym_tol: float = 1e-12) -> LinearOperator:
    """Wrap a symmetric scipy.sparse matrix."""
    a = sp.csr_array(matrix, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    asym = abs(a - a.T)
    scale = max(abs(a).max() if a.nnz else 0.0, np.finfo(float).tiny)
    if asym.nnz and asym.max() > sym_tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return LinearOperator(a.shape[0], lambda v: a @ v, name="sparse")


def gram_operator(samples, labels) -> LinearOperator:
    """Implicit SVM Hessian ``H = Y X^T X Y``.

    ``samples`` holds one (augmented) sample per column, dense or
    scipy.sparse. The m-by-m matrix is never formed.
    """
    x = sp.csr_array(samples) if sp.issparse(samples) else np.asarray(samples, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D matrix with samples as columns")
    if x.shape[1] != y.shape[0]:
        raise ValueError(f"{x.shape[1]} sample columns but {y.shape[0]} labels")
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be -1 or +1")
    xt = x.T.tocsr() if sp.issparse(x) else x.T

    def matvec(v):
        return y * (xt @ (x @ (y * v)))

    return LinearOperator(y.shape[0], matvec, name="gram")


def shifted_operator(base: LinearOperator, shift: float) -> LinearOperator:
    """``v -> base(v) + shift * v``; counting is delegated to ``base``."""
    if not shift > 0:
        raise ValueError(f"shift must be positive, got {shift}")
    shift = float(shift)
    return WrappedOperator(base, lambda v: shift * v, f"{base.name}+{shift:g}I")


class WrappedOperator(LinearOperator):
    """``v -> base(v) + extra(v)`` where ``extra`` is cheap bookkeeping.

    One application of the wrapper is one application of ``base``; the
    counter is the base counter.
    """

    def __init__(self, base: LinearOperator, extra: Callable[[np.ndarray], np.ndarray], name: str):
        self.base = base
        self.extra = extra
        self.dim = base.dim
        self.name = name

    @property
    def mult_counter(self) -> int:
        return self.base.mult_counter

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        return self.base.apply(v) + self.extra(v)

    __matmul__ = apply

    def _matvec(self, v):
        return self.base._matvec(v) + self.extra(v)

    def clone(self):
        return WrappedOperator(self.base.clone(), self.extra, self.name)

    def reset_counter(self):
        self.base.reset_counter()


def estimate_norm(op: LinearOperator, max_iters: int = 50, rel_change_tol: float = 1e-4,
                  seed: int = 0) -> NormEstimate:
    """Power iteration for the largest eigenvalue of a symmetric PSD operator.

    Stops when successive Rayleigh quotients agree to ``rel_change_tol``
    (relative), when the current vector is an eigenvector to that accuracy,
    or after ``max_iters`` applications.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    spent = 0
    for attempt in range(2):
        v = np.random.default_rng(seed + attempt).standard_normal(op.dim)
        v /= np.linalg.norm(v)
        rq_prev = None
        for it in range(1, max_iters + 1):
            w = op.apply(v)
            spent += 1
            rq = float(v @ w)
            wn = np.linalg.norm(w)
            if wn == 0.0:
                break
            if rq > 0 and (np.linalg.norm(w - rq * v) <= rel_change_tol * rq
                           or (rq_prev is not None and abs(rq - rq_prev) <= rel_change_tol * rq)):
                return NormEstimate(rq, spent, spent)
            rq_prev = rq
            v = w / wn
        else:
            return NormEstimate(rq, spent, spent)
    raise ArithmeticError("operator annihilated the power-iteration start vector twice")
