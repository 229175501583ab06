"""Communication-cost accounting in bits per transmitted update.

A sparse update with k nonzeros out of d coordinates costs
k * (value_bits + ceil(log2 d)); a dense float vector costs
d * dense_bits_per_coord. Quantized vectors use the standard elias-free
bound min{(ceil(log2 s) + 1) d, 3 s (s + sqrt(d)) + 32} bits.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np


def ceil_log2(d: int) -> int:
    """Smallest b with 2**b >= d; 0 for d == 1 (no index needed)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return (d - 1).bit_length()


@dataclass(frozen=True)
class CostModel:
    """Bit widths used for accounting; index width defaults to ceil(log2 d)."""

    value_bits: int = 32
    index_bits: int | None = None
    dense_bits_per_coord: int = 32

    def __post_init__(self):
        if self.value_bits < 1 or self.dense_bits_per_coord < 1:
            raise ValueError("bit widths must be >= 1")
        if self.index_bits is not None and self.index_bits < 0:
            raise ValueError("index_bits must be >= 0")

    def index_bits_for(self, d: int) -> int:
        if self.index_bits is not None:
            return self.index_bits
        return ceil_log2(d)


def bits_sparse(k: int, d: int, model: CostModel | None = None) -> int:
    """Cost of one k-sparse update in dimension d."""
    if not 1 <= k <= d:
        raise ValueError(f"k={k} out of range [1, {d}]")
    m = model or CostModel()
    return k * (m.value_bits + m.index_bits_for(d))


def bits_dense(d: int, model: CostModel | None = None) -> int:
    """Cost of one dense update in dimension d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    m = model or CostModel()
    return d * m.dense_bits_per_coord


def bits_qsgd(d: int, s: int) -> float:
    """Cost of one s-level quantized update in dimension d: the cheaper of
    the fixed-width encoding and the sparsity-exploiting bound."""
    if d < 1 or s < 1:
        raise ValueError("d and s must be >= 1")
    fixed = float((ceil_log2(s) + 1) * d)
    sparse_aware = 3.0 * s * (s + sqrt(d)) + 32.0
    return min(fixed, sparse_aware)


def bits_qsgd_sparse_aware(nnz: int, s: int) -> float:
    """Cost when only the nonzero quantized coordinates travel, with their
    indexes: the qsgd formula evaluated at d = nnz (0 for an empty update)."""
    if nnz < 0:
        raise ValueError("nnz must be >= 0")
    if s < 1:
        raise ValueError("s must be >= 1")
    if nnz == 0:
        return 0.0
    return bits_qsgd(nnz, s)


def track(per_iteration_bits) -> np.ndarray:
    """Cumulative bits after each iteration."""
    arr = np.asarray(per_iteration_bits, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("expected a 1-d sequence of per-iteration costs")
    return np.cumsum(arr)
