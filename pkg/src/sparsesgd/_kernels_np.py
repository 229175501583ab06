"""Pure-numpy kernel set.

Fallback backend with the same entry points as _kernels_nb. Both backends
consume the supplied np.random.Generator in an identical per-step order
(example index, then compressor draws) and mirror every floating-point
expression, so trajectories agree bitwise with the compiled kernels. Row
inner products use cumsum to reproduce the compiled sequential summation
order; do not replace with np.dot.
"""
from __future__ import annotations

import math

import numpy as np

from ._codes import (
    COMP_IDENTITY,
    COMP_QSGD,
    COMP_RAND_K,
    COMP_RAND_P,
    COMP_TOP_K,
    KIND_LOGISTIC,
)

NAME = "numpy"


def topk_select(v: np.ndarray, k: int) -> np.ndarray:
    """Indices (ascending) of the k largest |v|; ties keep the lowest index."""
    d = v.shape[0]
    if k >= d:
        return np.arange(d, dtype=np.int64)
    absv = np.abs(v)
    tau = np.partition(absv, d - k)[d - k]  # k-th largest magnitude
    gt = np.flatnonzero(absv > tau)
    need = k - gt.shape[0]
    eq = np.flatnonzero(absv == tau)[:need]
    idx = np.concatenate((gt, eq))
    idx.sort()
    return idx.astype(np.int64)


def randk_select(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform k-subset of [0, d) via Floyd's algorithm; ascending."""
    u = rng.random(k)
    sel = np.empty(k, dtype=np.int64)
    chosen = set()
    for j in range(k):
        r = d - k + j
        t = int(u[j] * (r + 1))
        if t > r:
            t = r
        if t in chosen:
            t = r
        chosen.add(t)
        sel[j] = t
    sel.sort()
    return sel


def randp_select(d: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(p) gate, then one uniform coordinate; 0 or 1 indices."""
    if rng.random() < p:
        return np.array([rng.integers(0, d)], dtype=np.int64)
    return np.empty(0, dtype=np.int64)


def qsgd_quantize(v: np.ndarray, s: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased s-level quantization; returns (indices, quantized values).

    Always consumes exactly d uniforms (when ||v|| > 0) so the draw count
    never depends on the values.
    """
    d = v.shape[0]
    norm = math.sqrt(float(np.cumsum(v * v)[-1])) if d else 0.0
    if norm == 0.0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    u = rng.random(d)
    r = (s * np.abs(v)) / norm
    level = np.floor(r)
    level += u < (r - level)
    keep = level > 0.0
    idx = np.flatnonzero(keep).astype(np.int64)
    vals = (norm * np.sign(v[idx])) * (level[keep] / s)
    return idx, vals


def _select(comp_code: int, v: np.ndarray, k: int, p: float, s: int,
            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if comp_code == COMP_IDENTITY:
        return np.arange(v.shape[0], dtype=np.int64), v.copy()
    if comp_code == COMP_TOP_K:
        idx = topk_select(v, k)
        return idx, v[idx]
    if comp_code == COMP_RAND_K:
        idx = randk_select(v.shape[0], k, rng)
        return idx, v[idx]
    if comp_code == COMP_RAND_P:
        idx = randp_select(v.shape[0], p, rng)
        return idx, v[idx]
    if comp_code == COMP_QSGD:
        return qsgd_quantize(v, s, rng)
    raise ValueError(f"unknown compressor code {comp_code}")


def _coef(obj_code: int, y: float, margin: float) -> float:
    if obj_code == KIND_LOGISTIC:
        t = y * margin
        if t >= 0.0:
            e = math.exp(-t)
            return -y * (e / (1.0 + e))
        return -y * (1.0 / (1.0 + math.exp(t)))
    return margin - y


def _row_grad(x, indptr, indices, data, y, lam, obj_code, i):
    lo, hi = indptr[i], indptr[i + 1]
    idx = indices[lo:hi]
    vals = data[lo:hi]
    if hi > lo:
        margin = float(np.cumsum(vals * x[idx])[-1])
    else:
        margin = 0.0
    c = _coef(obj_code, float(y[i]), margin)
    g = lam * x
    if hi > lo:
        g[idx] += c * vals
    return g


def run_steps(x, m, acc, xtilde,
              indptr, indices, data, y, lam, obj_code,
              comp_code, k, p, s,
              etas, weights, rng, n,
              track_avg, track_virtual,
              samples_out, nnz_out):
    """Sequential error-feedback segment; mutates x, m, acc, xtilde in place."""
    nsteps = etas.shape[0]
    for t in range(nsteps):
        i = int(rng.integers(0, n))
        samples_out[t] = i
        if track_avg:
            acc += weights[t] * x
        eta = etas[t]
        g = _row_grad(x, indptr, indices, data, y, lam, obj_code, i)
        v = m + eta * g
        if track_virtual:
            xtilde -= eta * g
        sel, sval = _select(comp_code, v, k, p, s, rng)
        nnz_out[t] = sel.shape[0]
        m[:] = v
        if sel.shape[0]:
            m[sel] = v[sel] - sval
            x[sel] -= sval


def run_steps_shared(x, m,
                     indptr, indices, data, y, lam, obj_code,
                     comp_code, k, p, s,
                     etas, rng, n,
                     samples_out, nnz_out):
    """Shared-x segment: snapshot read, private m, per-coordinate writes.

    np.subtract.at holds the GIL for the whole call, which is at least as
    strong as the per-coordinate atomicity the compiled backend provides.
    """
    nsteps = etas.shape[0]
    for t in range(nsteps):
        i = int(rng.integers(0, n))
        samples_out[t] = i
        eta = etas[t]
        snap = x.copy()
        g = _row_grad(snap, indptr, indices, data, y, lam, obj_code, i)
        v = m + eta * g
        sel, sval = _select(comp_code, v, k, p, s, rng)
        nnz_out[t] = sel.shape[0]
        m[:] = v
        if sel.shape[0]:
            m[sel] = v[sel] - sval
            np.subtract.at(x, sel, sval)


def shared_read_step(x, snap, m,
                     indptr, indices, data, y, lam, obj_code,
                     comp_code, k, p, s,
                     i, eta, rng, sel_buf, sval_buf):
    """Traced step, read half: snapshot x, compute update, refresh m.

    Fills sel_buf/sval_buf and returns the entry count, mirroring the
    buffer-based compiled interface.
    """
    snap[:] = x
    g = _row_grad(snap, indptr, indices, data, y, lam, obj_code, i)
    v = m + eta * g
    sel, sval = _select(comp_code, v, k, p, s, rng)
    m[:] = v
    nsel = sel.shape[0]
    if nsel:
        m[sel] = v[sel] - sval
        sel_buf[:nsel] = sel
        sval_buf[:nsel] = sval
    return nsel


def shared_write_step(x, snap, sel_buf, sval_buf, nsel):
    """Traced step, write half: count foreign writes since snapshot, apply."""
    stale = int(np.count_nonzero(x != snap))
    if nsel:
        np.subtract.at(x, sel_buf[:nsel], sval_buf[:nsel])
    return stale
