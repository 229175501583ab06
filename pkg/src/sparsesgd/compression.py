"""Sparsifying and quantizing compressors.

All operators satisfy (or, for qsgd, substitute for) the contraction
property E||x - comp(x)||^2 <= (1 - k_eff/d) ||x||^2 with k_eff = k for
top_k/rand_k, p for rand_p, d for identity. Values are copied from the
input, never recomputed, so comp(x) + (x - comp(x)) == x bitwise for the
sparsifiers. Selection runs on the active kernel backend so standalone
calls match what the optimizer loops do.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from . import backend
from ._codes import COMP_IDENTITY, COMP_QSGD, COMP_RAND_K, COMP_RAND_P, COMP_TOP_K

_KIND_CODES = {
    "identity": COMP_IDENTITY,
    "top_k": COMP_TOP_K,
    "rand_k": COMP_RAND_K,
    "rand_p": COMP_RAND_P,
    "qsgd": COMP_QSGD,
}


@dataclass(frozen=True)
class SparseUpdate:
    """Index-value pairs of a compressed vector; indices strictly increasing."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.indices.shape[0] != self.values.shape[0]:
            raise ValueError("indices and values must have equal length")
        if self.indices.shape[0]:
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValueError("index out of range [0, dim)")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


@dataclass(frozen=True)
class CompressorSpec:
    """Which operator plus its parameter; validated at construction."""

    kind: str
    k: int | None = None
    p: float | None = None
    s: int | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown compressor kind {self.kind!r}")
        if self.kind in ("top_k", "rand_k"):
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise ValueError(f"{self.kind} needs integer k >= 1")
            object.__setattr__(self, "k", int(self.k))
        elif self.k is not None:
            raise ValueError(f"{self.kind} takes no k")
        if self.kind == "rand_p":
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise ValueError("rand_p needs p in (0, 1]")
        elif self.p is not None:
            raise ValueError(f"{self.kind} takes no p")
        if self.kind == "qsgd":
            if self.s is None or int(self.s) != self.s or self.s < 1:
                raise ValueError("qsgd needs integer s >= 1")
            object.__setattr__(self, "s", int(self.s))
        elif self.s is not None:
            raise ValueError(f"{self.kind} takes no s")

    @classmethod
    def identity(cls) -> "CompressorSpec":
        return cls(kind="identity")

    @classmethod
    def top_k(cls, k: int) -> "CompressorSpec":
        return cls(kind="top_k", k=k)

    @classmethod
    def rand_k(cls, k: int) -> "CompressorSpec":
        return cls(kind="rand_k", k=k)

    @classmethod
    def rand_p(cls, p: float) -> "CompressorSpec":
        return cls(kind="rand_p", p=p)

    @classmethod
    def qsgd(cls, s: int) -> "CompressorSpec":
        return cls(kind="qsgd", s=s)

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def is_random(self) -> bool:
        return self.kind in ("rand_k", "rand_p", "qsgd")

    def k_eff(self, d: int) -> float | None:
        """Contraction parameter of Def.-style E||x-comp(x)||^2 <= (1-k/d)||x||^2."""
        if self.kind == "identity":
            return float(d)
        if self.kind in ("top_k", "rand_k"):
            return float(self.k)
        if self.kind == "rand_p":
            return self.p
        return None  # qsgd is not a contraction in this sense

    def label(self) -> str:
        if self.kind == "identity":
            return "identity"
        if self.kind == "top_k":
            return f"top_{self.k}"
        if self.kind == "rand_k":
            return f"rand_{self.k}"
        if self.kind == "rand_p":
            return f"randp_{self.p:g}"
        return f"qsgd_{self.s}"


def _as_vec(x) -> np.ndarray:
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-d vector")
    return v


def _check_k(k: int, d: int) -> None:
    if not 1 <= k <= d:
        raise ValueError(f"k={k} out of range [1, {d}]")


def identity(x) -> SparseUpdate:
    v = _as_vec(x)
    return SparseUpdate(np.arange(v.shape[0], dtype=np.int64), v.copy(), v.shape[0])


def top_k(x, k: int) -> SparseUpdate:
    """k largest-magnitude entries; ties keep the lowest index."""
    v = _as_vec(x)
    _check_k(k, v.shape[0])
    idx = backend.kernels().topk_select(v, k)
    return SparseUpdate(idx, v[idx], v.shape[0])


def rand_k(x, k: int, rng: np.random.Generator) -> SparseUpdate:
    """Uniformly random k-subset of coordinates, values preserved."""
    v = _as_vec(x)
    _check_k(k, v.shape[0])
    idx = backend.kernels().randk_select(v.shape[0], k, rng)
    return SparseUpdate(idx, v[idx], v.shape[0])


def rand_p(x, p: float, rng: np.random.Generator) -> SparseUpdate:
    """With probability p, one uniform coordinate; otherwise empty."""
    v = _as_vec(x)
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    idx = backend.kernels().randp_select(v.shape[0], p, rng)
    return SparseUpdate(idx, v[idx], v.shape[0])


def qsgd(x, s: int, rng: np.random.Generator) -> SparseUpdate:
    """Unbiased s-level stochastic quantization with l2-norm scaling."""
    v = _as_vec(x)
    if int(s) != s or s < 1:
        raise ValueError("s must be an integer >= 1")
    idx, vals = backend.kernels().qsgd_quantize(v, int(s), rng)
    return SparseUpdate(idx, vals, v.shape[0])


def compress(x, spec: CompressorSpec, rng: np.random.Generator | None = None) -> SparseUpdate:
    """Apply the operator described by spec."""
    if spec.is_random and rng is None:
        raise ValueError(f"{spec.kind} needs an rng")
    if spec.kind == "identity":
        return identity(x)
    if spec.kind == "top_k":
        return top_k(x, spec.k)
    if spec.kind == "rand_k":
        return rand_k(x, spec.k, rng)
    if spec.kind == "rand_p":
        return rand_p(x, spec.p, rng)
    return qsgd(x, spec.s, rng)


def _residual_sq(x: np.ndarray, upd: SparseUpdate) -> float:
    r = x - upd.to_dense()
    return float(r @ r)


def contraction_exact(spec: CompressorSpec, x) -> float:
    """E||x - comp(x)||^2 by exact enumeration (deterministic kinds: one
    evaluation; rand_k: all C(d,k) subsets; rand_p: gate x coordinate)."""
    v = _as_vec(x)
    d = v.shape[0]
    xsq = float(v @ v)
    if spec.kind == "identity":
        return 0.0
    if spec.kind == "top_k":
        return _residual_sq(v, top_k(v, spec.k))
    if spec.kind == "rand_k":
        _check_k(spec.k, d)
        if comb(d, spec.k) > 200_000:
            raise ValueError("too many subsets to enumerate")
        total = 0.0
        for subset in combinations(range(d), spec.k):
            kept = sum(float(v[j]) * float(v[j]) for j in subset)
            total += xsq - kept
        return total / comb(d, spec.k)
    if spec.kind == "rand_p":
        coord_mean = sum(xsq - float(v[j]) * float(v[j]) for j in range(d)) / d
        return (1.0 - spec.p) * xsq + spec.p * coord_mean
    raise NotImplementedError("no exact enumeration for qsgd; use Monte Carlo")


def contraction_estimate(spec: CompressorSpec, x, trials: int = 1000,
                         rng: np.random.Generator | None = None,
                         exact: bool = False) -> float:
    """E||x - comp(x)||^2 / ||x||^2 in [0, 1]; 0 for x = 0 by convention."""
    v = _as_vec(x)
    xsq = float(v @ v)
    if xsq == 0.0:
        return 0.0
    if exact:
        return contraction_exact(spec, v) / xsq
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not spec.is_random:
        upd = compress(v, spec)
        return _residual_sq(v, upd) / xsq
    if rng is None:
        raise ValueError("Monte Carlo estimation needs an rng")
    total = 0.0
    for _ in range(trials):
        total += _residual_sq(v, compress(v, spec, rng))
    return total / trials / xsq
