"""Linear no-bias SVM training through the box-constrained dual.

The bias is folded into the normal vector by appending a constant ``beta``
to every sample, so the l1-loss dual is a pure box QP and the l2-loss dual
a nonnegativity-constrained QP with a ``1/C`` diagonal shift.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .linop import gram_operator, shifted_operator
from .problem import BoxQP
from .solver import SolveReport, SolverConfig, solve

EPS_M = float(np.finfo(float).eps)


class LibsvmFormatError(ValueError):
    pass


@dataclass
class LabeledDataset:
    """Samples stored column-wise in a sparse ``n_features x m`` matrix."""

    samples: sp.csc_array
    labels: np.ndarray

    def __post_init__(self):
        self.samples = sp.csc_array(self.samples, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.samples.shape[1] != self.labels.shape[0]:
            raise ValueError("column count and label count differ")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be -1 or +1")

    @property
    def feature_count(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_count(self) -> int:
        return self.samples.shape[1]


def parse_libsvm(stream, feature_count: Optional[int] = None) -> LabeledDataset:
    """Read ``<label> <idx>:<val> ...`` lines (1-based ascending indices).

    Exactly two distinct raw labels are required; the larger maps to +1.
    ``stream`` may be a path, an open text file or a string buffer.
    """
    if isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__"):
        with open(stream) as fh:
            return parse_libsvm(fh, feature_count)

    raw_labels, rows, cols, vals = [], [], [], []
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            raw_labels.append(float(fields[0]))
        except ValueError:
            raise LibsvmFormatError(f"line {lineno}: bad label {fields[0]!r}") from None
        prev = 0
        col = len(raw_labels) - 1
        for tok in fields[1:]:
            idx, sep, val = tok.partition(":")
            try:
                j, v = int(idx), float(val)
            except ValueError:
                raise LibsvmFormatError(f"line {lineno}: bad feature {tok!r}") from None
            if not sep or j < 1:
                raise LibsvmFormatError(f"line {lineno}: bad feature {tok!r}")
            if j <= prev:
                raise LibsvmFormatError(f"line {lineno}: indices not strictly ascending at {j}")
            prev = j
            rows.append(j - 1)
            cols.append(col)
            vals.append(v)

    classes = np.unique(raw_labels)
    if classes.size != 2:
        raise LibsvmFormatError(f"expected two classes, found {classes.size}")
    labels = np.where(np.asarray(raw_labels) == classes[1], 1.0, -1.0)
    nf = max(rows, default=-1) + 1
    if feature_count is not None:
        if feature_count < nf:
            raise LibsvmFormatError(f"feature index {nf} exceeds feature_count={feature_count}")
        nf = feature_count
    x = sp.csc_array((vals, (rows, cols)), shape=(nf, len(raw_labels)))
    return LabeledDataset(x, labels)


def write_libsvm(data: LabeledDataset, stream) -> None:
    x = data.samples.tocsc()
    for i in range(data.sample_count):
        lo, hi = x.indptr[i], x.indptr[i + 1]
        order = np.argsort(x.indices[lo:hi])
        feats = " ".join(f"{x.indices[lo + k] + 1}:{x.data[lo + k]:.17g}" for k in order)
        stream.write(f"{int(data.labels[i]):+d} {feats}".rstrip() + "\n")


def augment_nobias(data: LabeledDataset, beta: float = 1.0) -> LabeledDataset:
    if not beta > 0:
        raise ValueError("beta must be positive")
    row = sp.csc_array(np.full((1, data.sample_count), float(beta)))
    return LabeledDataset(sp.vstack([data.samples, row], format="csc"), data.labels)


def build_dual(data: LabeledDataset, loss: str, C: float) -> BoxQP:
    """Dual QP of an already augmented dataset.

    l1: ``H = Y X^T X Y``, ``0 <= lambda <= C``. l2: ``H + I/C``, ``lambda >= 0``.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    m = data.sample_count
    H = gram_operator(data.samples, data.labels)
    ones = np.ones(m)
    if loss == "l1":
        return BoxQP(H, ones, np.zeros(m), np.full(m, float(C)))
    if loss == "l2":
        return BoxQP(shifted_operator(H, 1.0 / C), ones, np.zeros(m), None)
    raise ValueError(f"loss must be 'l1' or 'l2', got {loss!r}")


@dataclass
class SvmModel:
    w_hat: np.ndarray
    beta: float
    loss: str
    C: float
    dual_solution: Optional[np.ndarray] = None

    def to_json(self) -> str:
        return json.dumps({"w_hat": [float(v) for v in self.w_hat], "beta": self.beta,
                           "loss": self.loss, "C": self.C})

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        doc = json.loads(text)
        return cls(np.asarray(doc["w_hat"], float), float(doc["beta"]), doc["loss"], float(doc["C"]))


def initial_guess(loss: str, C: float, m: int) -> np.ndarray:
    """Just under the upper bound for l1; zero for l2 (no upper bound)."""
    if loss == "l1":
        return np.full(m, (1.0 - 100 * EPS_M) * C)
    return np.zeros(m)


def train(data: LabeledDataset, loss: str = "l1", C: float = 1.0, beta: float = 1.0,
          config: Optional[SolverConfig] = None, x0=None) -> tuple[SvmModel, SolveReport]:
    """Train on raw (unaugmented) data; returns the model and the solver report."""
    config = config or SolverConfig(rtol=1e-1)
    aug = augment_nobias(data, beta)
    problem = build_dual(aug, loss, C)
    if x0 is None:
        x0 = initial_guess(loss, C, data.sample_count)
    report = solve(problem, x0, config)
    lam = report.x
    w_hat = aug.samples @ (lam * aug.labels)
    return SvmModel(np.asarray(w_hat), float(beta), loss, float(C), lam), report


def _augmented_samples(model: SvmModel, samples) -> sp.csc_array:
    x = sp.csc_array(samples.samples if isinstance(samples, LabeledDataset) else samples, dtype=float)
    nf = model.w_hat.shape[0] - 1
    if x.shape[0] > nf:
        raise ValueError(f"samples have {x.shape[0]} features, model expects at most {nf}")
    if x.shape[0] < nf:
        x = sp.vstack([x, sp.csc_array((nf - x.shape[0], x.shape[1]))], format="csc")
    return sp.vstack([x, sp.csc_array(np.full((1, x.shape[1]), model.beta))], format="csc")


def predict(model: SvmModel, samples) -> np.ndarray:
    """Sign of the augmented decision value; ties go to +1."""
    scores = _augmented_samples(model, samples).T @ model.w_hat
    return np.where(scores >= 0, 1.0, -1.0)


def accuracy(model: SvmModel, data: LabeledDataset) -> float:
    return float(np.mean(predict(model, data) == data.labels))


def load_dataset(path) -> LabeledDataset:
    return parse_libsvm(path)


def parse_libsvm_text(text: str, feature_count: Optional[int] = None) -> LabeledDataset:
    return parse_libsvm(io.StringIO(text), feature_count)
