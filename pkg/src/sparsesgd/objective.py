"""Finite-sum objectives and gradient oracles.

Two kinds over a shared CSR dataset:
  logistic:  f(x) = (1/n) sum log(1 + exp(-y_i a_i'x)) + (lam/2)||x||^2
  quadratic: f(x) = (1/2n) sum (a_i'x - y_i)^2        + (lam/2)||x||^2

stochastic_grad accumulates row inner products in index order and applies
the regularizer term first; the step kernels mirror the exact same
expressions so a hand-rolled SGD loop built on this oracle reproduces the
optimizer bitwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._codes import KIND_LOGISTIC, KIND_QUADRATIC
from .data import Dataset, SyntheticProblem

_KIND_CODES = {"logistic": KIND_LOGISTIC, "quadratic": KIND_QUADRATIC}


@dataclass(frozen=True)
class Objective:
    dataset: Dataset
    lam: float
    kind: str = "logistic"

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.kind]

    @staticmethod
    def from_problem(prob: SyntheticProblem) -> "Objective":
        return Objective(prob.dataset, prob.lam, prob.kind)


@dataclass
class GradientSample:
    index: int
    gradient: np.ndarray


def _check_dim(obj: Objective, x: np.ndarray) -> None:
    if x.shape[0] != obj.d:
        raise ValueError(f"x has dim {x.shape[0]}, objective has d={obj.d}")


def full_value(obj: Objective, x: np.ndarray) -> float:
    """Exact finite-sum objective value; stable for large margins."""
    _check_dim(obj, x)
    reg = 0.5 * obj.lam * float(x @ x)
    if obj.n == 0:
        return reg
    margins = obj.dataset.margins(x)
    y = obj.dataset.labels
    if obj.kind == "logistic":
        data_term = float(np.logaddexp(0.0, -y * margins).mean())
    else:
        r = margins - y
        data_term = 0.5 * float(r @ r) / obj.n
    return data_term + reg


def _coef(kind_code: int, y: float, margin: float) -> float:
    """Scalar d(loss_i)/d(margin); mirrored by the step kernels.

    math.exp (libm) rather than np.exp so the value is bitwise identical
    to the compiled kernels' scalar path.
    """
    if kind_code == KIND_LOGISTIC:
        t = y * margin
        if t >= 0.0:
            e = math.exp(-t)
            return -y * (e / (1.0 + e))
        return -y * (1.0 / (1.0 + math.exp(t)))
    return margin - y


def stochastic_grad(obj: Objective, x: np.ndarray, i: int | None = None,
                    rng: np.random.Generator | None = None) -> GradientSample:
    """grad f_i(x) = coef * a_i + lam * x; i drawn from rng when omitted."""
    _check_dim(obj, x)
    if i is None:
        if rng is None:
            raise ValueError("provide either i or rng")
        i = int(rng.integers(0, obj.n))
    if not 0 <= i < obj.n:
        raise IndexError(f"example index {i} out of range [0, {obj.n})")
    idx, vals = obj.dataset.row(i)
    if idx.size:
        margin = float(np.cumsum(vals * x[idx])[-1])  # sequential order, as in the kernels
    else:
        margin = 0.0
    c = _coef(obj.kind_code, float(obj.dataset.labels[i]), margin)
    g = obj.lam * x
    if idx.size:
        g[idx] += c * vals
    return GradientSample(index=i, gradient=g)


def full_grad(obj: Objective, x: np.ndarray) -> np.ndarray:
    """Exact full gradient (vectorized; used by solvers and probes)."""
    _check_dim(obj, x)
    g = obj.lam * x
    if obj.n == 0:
        return g
    margins = obj.dataset.margins(x)
    y = obj.dataset.labels
    if obj.kind == "logistic":
        t = y * margins
        s = np.empty_like(t)
        pos = t >= 0
        e = np.exp(-t[pos])
        s[pos] = e / (1.0 + e)
        s[~pos] = 1.0 / (1.0 + np.exp(t[~pos]))
        coefs = -y * s
    else:
        coefs = margins - y
    ds = obj.dataset
    if ds.nnz:
        per_entry = coefs[np.repeat(np.arange(ds.n), np.diff(ds.indptr))] * ds.values
        g += np.bincount(ds.indices, weights=per_entry, minlength=ds.d) / ds.n
    return g


def grad_norm_bound_estimate(obj: Objective, points) -> float:
    """max over points of E_i ||grad f_i(x)||^2 (exact finite-sum average).

    Expanded as c_i^2 ||a_i||^2 + 2 lam c_i (a_i'x) + lam^2 ||x||^2 so no
    per-example loop is needed; a brute-force oracle cross-checks this in
    the tests.
    """
    pts = list(points)
    if not pts:
        raise ValueError("points must be nonempty")
    sq = obj.dataset.row_sq_norms()
    y = obj.dataset.labels
    best = -np.inf
    for x in pts:
        _check_dim(obj, x)
        margins = obj.dataset.margins(x)
        if obj.kind == "logistic":
            t = y * margins
            s = np.empty_like(t)
            pos = t >= 0
            e = np.exp(-t[pos])
            s[pos] = e / (1.0 + e)
            s[~pos] = 1.0 / (1.0 + np.exp(t[~pos]))
            coefs = -y * s
        else:
            coefs = margins - y
        val = float(
            np.mean(coefs**2 * sq + 2.0 * obj.lam * coefs * margins)
            + obj.lam**2 * float(x @ x)
        )
        if val > best:
            best = val
    return best


def smoothness_bound(obj: Objective) -> float:
    """L-hat = max_i ||a_i||^2 * curvature + lam (0.25 for logistic, 1 for quadratic)."""
    sq = obj.dataset.row_sq_norms()
    top = float(sq.max()) if sq.size else 0.0
    curv = 0.25 if obj.kind == "logistic" else 1.0
    return top * curv + obj.lam
