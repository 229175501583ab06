"""Datasets and synthetic problems.

Row-sparse example matrices in CSR layout with float64 targets, a strict
LIBSVM-format parser/serializer (1-based indices on the wire, 0-based in
memory), and two seeded generators: an L2-regularized logistic problem whose
optimum is found by a damped Newton solve, and a least-squares problem with
an exactly controlled Hessian spectrum.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class LibsvmParseError(ValueError):
    """Malformed LIBSVM input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(eq=False)
class Dataset:
    """CSR example matrix: row i has indices[indptr[i]:indptr[i+1]].

    Labels are float64: +-1 for classification data, real targets for
    least-squares problems. Structural invariants (sorted in-range indices,
    consistent shapes) are checked at construction.
    """

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    d: int

    def __post_init__(self):
        self.indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        n = self.labels.shape[0]
        if self.indptr.shape[0] != n + 1 or self.indptr[0] != 0:
            raise ValueError("indptr must have n+1 entries starting at 0")
        if self.indptr[-1] != self.indices.shape[0]:
            raise ValueError("indptr[-1] must equal the number of nonzeros")
        if self.indices.shape[0] != self.values.shape[0]:
            raise ValueError("indices and values must have equal length")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be nondecreasing")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= self.d:
                raise ValueError("feature index out of range [0, d)")
            # strictly increasing within each row
            gaps = np.diff(self.indices)
            row_starts = self.indptr[1:-1]
            row_starts = row_starts[row_starts < self.indices.shape[0]]
            interior = np.ones(self.indices.shape[0], dtype=bool)
            interior[0] = False
            interior[row_starts] = False
            if np.any(gaps[interior[1:]] <= 0):
                raise ValueError("indices within a row must be strictly increasing")

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    @property
    def density(self) -> float:
        if self.n == 0 or self.d == 0:
            return 0.0
        return self.nnz / (self.n * self.d)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    def row_sq_norms(self) -> np.ndarray:
        """Per-row squared feature norms (used for smoothness constants)."""
        out = np.zeros(self.n)
        if self.nnz:
            row_ids = np.repeat(np.arange(self.n), np.diff(self.indptr))
            out = np.bincount(row_ids, weights=self.values**2, minlength=self.n)
        return out

    def margins(self, x: np.ndarray) -> np.ndarray:
        """Row-wise inner products A @ x without densifying."""
        if x.shape[0] != self.d:
            raise ValueError(f"x has dim {x.shape[0]}, dataset has d={self.d}")
        if self.nnz == 0:
            return np.zeros(self.n)
        row_ids = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return np.bincount(row_ids, weights=self.values * x[self.indices], minlength=self.n)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.d))
        for i in range(self.n):
            idx, vals = self.row(i)
            out[i, idx] = vals
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.d == other.d
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.labels, other.labels)
        )

    @staticmethod
    def from_rows(rows, labels, d: int) -> "Dataset":
        """Build from [(indices, values), ...]; indices already 0-based sorted."""
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        idx_parts, val_parts = [], []
        for i, (idx, vals) in enumerate(rows):
            indptr[i + 1] = indptr[i] + len(idx)
            idx_parts.append(np.asarray(idx, dtype=np.int64))
            val_parts.append(np.asarray(vals, dtype=np.float64))
        indices = np.concatenate(idx_parts) if idx_parts else np.zeros(0, np.int64)
        values = np.concatenate(val_parts) if val_parts else np.zeros(0, np.float64)
        return Dataset(indptr, indices, values, np.asarray(labels, dtype=np.float64), d)


@dataclass
class SyntheticProblem:
    """A dataset plus everything tests need: regularizer, kind, optimum."""

    dataset: Dataset
    lam: float
    kind: str  # "logistic" | "quadratic"
    optimum: np.ndarray | None = None
    optimum_value: float | None = None
    mu: float | None = None  # strong-convexity constant when known
    smoothness: float | None = None
    meta: dict = field(default_factory=dict)


def parse_libsvm(text, zero_one_labels: bool = False, d: int | None = None) -> Dataset:
    """Parse LIBSVM text: `<label> <idx>:<val> ...`, 1-based indices.

    Labels must be exactly +-1, or {0,1} with zero_one_labels=True (0 maps
    to -1). d defaults to the maximum seen index; an explicit d must cover
    every index. Raises LibsvmParseError with the offending line number.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows, labels = [], []
    max_idx = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            label = float(parts[0])
        except ValueError:
            raise LibsvmParseError(line_no, f"bad label {parts[0]!r}") from None
        if zero_one_labels and label in (0.0, 1.0):
            label = -1.0 if label == 0.0 else 1.0
        elif label not in (-1.0, 1.0):
            raise LibsvmParseError(line_no, f"label {parts[0]!r} not in {{-1,+1}}")
        idx, vals = [], []
        prev = 0
        for tok in parts[1:]:
            pos, sep, raw = tok.partition(":")
            if not sep:
                raise LibsvmParseError(line_no, f"expected idx:val, got {tok!r}")
            try:
                j = int(pos)
                val = float(raw)
            except ValueError:
                raise LibsvmParseError(line_no, f"bad entry {tok!r}") from None
            if j < 1:
                raise LibsvmParseError(line_no, f"index {j} must be >= 1")
            if j <= prev:
                raise LibsvmParseError(line_no, f"index {j} not strictly increasing")
            prev = j
            idx.append(j - 1)
            vals.append(val)
        if prev > max_idx:
            max_idx = prev
        rows.append((idx, vals))
        labels.append(label)
    dim = max_idx if d is None else d
    if d is not None and max_idx > d:
        raise LibsvmParseError(0, f"explicit d={d} smaller than max index {max_idx}")
    return Dataset.from_rows(rows, labels, dim)


def to_libsvm(ds: Dataset) -> str:
    """Serialize back to LIBSVM text (1-based indices, repr-exact values)."""
    lines = []
    for i in range(ds.n):
        idx, vals = ds.row(i)
        label = ds.labels[i]
        head = str(int(label)) if label == int(label) else repr(float(label))
        toks = [head] + [f"{int(j) + 1}:{repr(float(v))}" for j, v in zip(idx, vals)]
        lines.append(" ".join(toks))
    return "\n".join(lines) + ("\n" if lines else "")


def _stable_neg_sigma(t: np.ndarray) -> np.ndarray:
    """sigma(-t) elementwise without overflow."""
    out = np.empty_like(t)
    pos = t >= 0
    e = np.exp(-t[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(t[~pos]))
    return out


def _logistic_value(A: np.ndarray, y: np.ndarray, lam: float, x: np.ndarray) -> float:
    margins = A @ x
    loss = float(np.logaddexp(0.0, -y * margins).mean())
    return loss + 0.5 * lam * float(x @ x)


def _newton_logistic(A: np.ndarray, y: np.ndarray, lam: float,
                     tol: float = 1e-11, max_iter: int = 100) -> np.ndarray:
    """Damped Newton to gradient norm <= tol; deterministic."""
    n, d = A.shape
    x = np.zeros(d)
    for _ in range(max_iter):
        margins = A @ x
        s = _stable_neg_sigma(y * margins)  # sigma(-y m)
        grad = -(A.T @ (y * s)) / n + lam * x
        if float(np.linalg.norm(grad)) <= tol:
            return x
        w = s * (1.0 - s)
        H = (A.T * w) @ A / n + lam * np.eye(d)
        delta = np.linalg.solve(H, grad)
        f0 = _logistic_value(A, y, lam, x)
        slope = float(grad @ delta)
        stepsize = 1.0
        while stepsize > 1e-10:
            if _logistic_value(A, y, lam, x - stepsize * delta) <= f0 - 1e-4 * stepsize * slope:
                break
            stepsize *= 0.5
        x = x - stepsize * delta
    return x


def make_synthetic_logistic(n: int, d: int, density: float = 1.0,
                            seed: int = 0, flip_fraction: float = 0.1,
                            solve_optimum: bool = True) -> SyntheticProblem:
    """Seeded logistic problem with unit-norm rows and lambda = 1/n.

    Labels come from a random linear separator with a fraction of flips so
    the optimum has nonzero stochastic gradients. The optimum is solved to
    gradient norm < 1e-10 by damped Newton and stored with its value;
    solve_optimum=False skips that (a d x d Newton solve is the only
    expensive part of construction) and leaves optimum/optimum_value None.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must be in (0, 1]")
    rng = np.random.default_rng(seed)
    if density >= 1.0:
        mask = np.ones((n, d), dtype=bool)
    else:
        mask = rng.random((n, d)) < density
        for i in np.flatnonzero(~mask.any(axis=1)):
            mask[i, rng.integers(0, d)] = True  # no empty rows
    A = np.zeros((n, d))
    A[mask] = rng.standard_normal(int(mask.sum()))
    norms = np.linalg.norm(A, axis=1)
    A /= norms[:, None]
    w_true = rng.standard_normal(d)
    margins = A @ w_true
    y = np.where(margins >= 0, 1.0, -1.0)
    flips = rng.random(n) < flip_fraction
    y[flips] *= -1.0

    rows = []
    for i in range(n):
        idx = np.flatnonzero(mask[i])
        rows.append((idx, A[i, idx]))
    ds = Dataset.from_rows(rows, y, d)
    lam = 1.0 / n
    x_star = f_star = None
    if solve_optimum:
        x_star = _newton_logistic(A, y, lam)
        f_star = _logistic_value(A, y, lam, x_star)
    return SyntheticProblem(
        dataset=ds, lam=lam, kind="logistic",
        optimum=x_star, optimum_value=f_star,
        mu=lam, smoothness=float(ds.row_sq_norms().max() / 4.0 + lam),
        meta={"seed": seed, "flip_fraction": flip_fraction},
    )


def make_ridge_quadratic(n: int, d: int, kappa: float, seed: int = 0,
                         noise_std: float = 0.1, spike: float = 50.0) -> SyntheticProblem:
    """Ridge least squares f(x) = (1/2n)||Ax - b||^2 + (lam/2)||x||^2 with
    unit-norm rows and condition number exactly kappa.

    Unit rows cap the per-sample smoothness at 1 + lam, so single-sample
    steps with eta < 2/(1 + lam) never amplify (the regime the bounded
    gradient analysis lives in); the data covariance gets one spiked
    direction so the top Hessian eigenvalue stands clear of the bulk, and
    lam = (l_max - kappa*l_min)/(kappa - 1) places (l_max + lam)/(l_min + lam)
    at kappa. With n < d the data Gram is singular, so mu equals lam itself.
    """
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    if kappa <= 1.0:
        raise ValueError("kappa must exceed 1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    A = rng.standard_normal((n, d)) + np.sqrt(spike) * np.outer(rng.standard_normal(n), u)
    A /= np.linalg.norm(A, axis=1)[:, None]
    evals = np.linalg.eigvalsh(A.T @ A / n)
    lmin = max(float(evals[0]), 0.0)
    lmax = float(evals[-1])
    lam = (lmax - kappa * lmin) / (kappa - 1.0)
    if lam <= 0:
        raise ValueError(f"kappa={kappa} unreachable: data spectrum already "
                         f"conditioned better ({lmax / max(lmin, 1e-300):.3g})")
    x_true = rng.standard_normal(d)
    b = A @ x_true
    if noise_std > 0.0:
        b = b + noise_std * rng.standard_normal(n)
    H = A.T @ A / n + lam * np.eye(d)
    x_star = np.linalg.solve(H, A.T @ b / n)
    resid = A @ x_star - b
    f_star = 0.5 * float(resid @ resid) / n + 0.5 * lam * float(x_star @ x_star)

    rows = [(np.arange(d), A[i]) for i in range(n)]
    ds = Dataset.from_rows(rows, b, d)
    return SyntheticProblem(
        dataset=ds, lam=lam, kind="quadratic",
        optimum=x_star, optimum_value=f_star,
        mu=lmin + lam, smoothness=lmax + lam,
        meta={"seed": seed, "noise_std": noise_std, "kappa": kappa,
              "sample_smoothness": 1.0 + lam},
    )


def make_quadratic(d: int, mu: float, L: float, seed: int = 0,
                   n: int | None = None, noise_std: float = 0.0) -> SyntheticProblem:
    """Least-squares f(x) = (1/2n)||Ax - b||^2 with spectrum((1/n)A'A) in [mu, L].

    Columns of an orthonormal basis are scaled so the Hessian eigenvalues
    are exactly linspace(mu, L, d) up to float error. b = A x_true + noise;
    the optimum solves the normal equations and is stored with its value.
    """
    if not 0.0 < mu <= L:
        raise ValueError("need 0 < mu <= L")
    if d < 1:
        raise ValueError("d must be >= 1")
    if n is None:
        n = 2 * d
    if n < d:
        raise ValueError("need n >= d for a full-rank design")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, d))
    Q, _ = np.linalg.qr(G)  # n x d, orthonormal columns
    spectrum = np.linspace(mu, L, d)
    A = Q * np.sqrt(n * spectrum)
    x_true = rng.standard_normal(d)
    b = A @ x_true
    if noise_std > 0.0:
        b = b + noise_std * rng.standard_normal(n)
    x_star = np.linalg.solve(A.T @ A, A.T @ b)
    resid = A @ x_star - b
    f_star = 0.5 * float(resid @ resid) / n

    rows = [(np.arange(d), A[i]) for i in range(n)]
    ds = Dataset.from_rows(rows, b, d)
    return SyntheticProblem(
        dataset=ds, lam=0.0, kind="quadratic",
        optimum=x_star, optimum_value=f_star,
        mu=mu, smoothness=L,
        meta={"seed": seed, "noise_std": noise_std, "spectrum": (mu, L)},
    )
