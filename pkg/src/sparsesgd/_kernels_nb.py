"""Compiled (numba) kernel set.

Same entry points and draw order as _kernels_np; every floating-point
expression is mirrored so the two backends produce bitwise-identical
trajectories from the same Generator. Shared-vector writes go through an
llvmlite atomic fetch-subtract, which is the per-coordinate atomicity
contract the lock-free runner relies on. Kernels are nogil so worker
threads can overlap.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit
from numba import types as nbt
from numba.core import cgutils
from numba.extending import intrinsic

from ._codes import (
    COMP_IDENTITY,
    COMP_QSGD,
    COMP_RAND_K,
    COMP_RAND_P,
    COMP_TOP_K,
    KIND_LOGISTIC,
)

NAME = "numba"


@intrinsic
def _atomic_fsub(typingctx, arr, idx, val):
    """Atomic x[idx] -= val on a float64 array; returns the old value."""
    sig = nbt.float64(arr, nbt.intp, nbt.float64)

    def codegen(context, builder, signature, args):
        arr_v, idx_v, val_v = args
        aryty = signature.args[0]
        ary = context.make_array(aryty)(context, builder, arr_v)
        ptr = cgutils.get_item_pointer(context, builder, aryty, ary, [idx_v],
                                       wraparound=False)
        return builder.atomic_rmw("fsub", ptr, val_v, "monotonic")

    return sig, codegen


@njit(cache=True, nogil=True)
def _coef(obj_code, y, margin):
    if obj_code == KIND_LOGISTIC:
        t = y * margin
        if t >= 0.0:
            e = math.exp(-t)
            return -y * (e / (1.0 + e))
        return -y * (1.0 / (1.0 + math.exp(t)))
    return margin - y


@njit(cache=True, nogil=True)
def _topk_into(v, k, sel):
    d = v.shape[0]
    if k >= d:
        for j in range(d):
            sel[j] = j
        return d
    absv = np.abs(v)
    tau = np.partition(absv, d - k)[d - k]  # k-th largest magnitude
    c = 0
    for j in range(d):
        if absv[j] > tau:
            sel[c] = j
            c += 1
    for j in range(d):
        if c >= k:
            break
        if absv[j] == tau:
            sel[c] = j
            c += 1
    sel[:k] = np.sort(sel[:k])
    return k


@njit(cache=True, nogil=True)
def _randk_into(d, k, rng, sel):
    u = rng.random(k)
    for j in range(k):
        r = d - k + j
        t = int(u[j] * (r + 1))
        if t > r:
            t = r
        for q in range(j):
            if sel[q] == t:
                t = r
                break
        sel[j] = t
    sel[:k] = np.sort(sel[:k])
    return k


@njit(cache=True, nogil=True)
def _randp_into(d, p, rng, sel):
    if rng.random() < p:
        sel[0] = rng.integers(0, d)
        return 1
    return 0


@njit(cache=True, nogil=True)
def _qsgd_into(v, s, rng, sel, sval):
    d = v.shape[0]
    acc = 0.0
    for j in range(d):
        acc += v[j] * v[j]
    norm = math.sqrt(acc)
    if norm == 0.0:
        return 0
    u = rng.random(d)
    c = 0
    for j in range(d):
        av = abs(v[j])
        r = (s * av) / norm
        lev = math.floor(r)
        if u[j] < (r - lev):
            lev += 1.0
        if lev > 0.0:
            sgn = 1.0 if v[j] > 0.0 else -1.0
            sel[c] = j
            sval[c] = (norm * sgn) * (lev / s)
            c += 1
    return c


@njit(cache=True, nogil=True)
def _select_into(comp_code, v, k, p, s, rng, sel, sval):
    if comp_code == COMP_IDENTITY:
        d = v.shape[0]
        for j in range(d):
            sel[j] = j
            sval[j] = v[j]
        return d
    if comp_code == COMP_QSGD:
        return _qsgd_into(v, s, rng, sel, sval)
    if comp_code == COMP_TOP_K:
        nsel = _topk_into(v, k, sel)
    elif comp_code == COMP_RAND_K:
        nsel = _randk_into(v.shape[0], k, rng, sel)
    else:
        nsel = _randp_into(v.shape[0], p, rng, sel)
    for e in range(nsel):
        sval[e] = v[sel[e]]
    return nsel


@njit(cache=True, nogil=True)
def run_steps(x, m, acc, xtilde,
              indptr, indices, data, y, lam, obj_code,
              comp_code, k, p, s,
              etas, weights, rng, n,
              track_avg, track_virtual,
              samples_out, nnz_out):
    """Sequential error-feedback segment; mutates x, m, acc, xtilde in place."""
    d = x.shape[0]
    nsteps = etas.shape[0]
    g = np.empty(d)
    v = np.empty(d)
    sel = np.empty(d, np.int64)
    sval = np.empty(d)
    for t in range(nsteps):
        i = rng.integers(0, n)
        samples_out[t] = i
        if track_avg:
            w = weights[t]
            for j in range(d):
                acc[j] += w * x[j]
        eta = etas[t]
        lo = indptr[i]
        hi = indptr[i + 1]
        margin = 0.0
        for ptr in range(lo, hi):
            margin += data[ptr] * x[indices[ptr]]
        c = _coef(obj_code, y[i], margin)
        for j in range(d):
            g[j] = lam * x[j]
        for ptr in range(lo, hi):
            g[indices[ptr]] += c * data[ptr]
        for j in range(d):
            v[j] = m[j] + eta * g[j]
        if track_virtual:
            for j in range(d):
                xtilde[j] -= eta * g[j]
        nsel = _select_into(comp_code, v, k, p, s, rng, sel, sval)
        nnz_out[t] = nsel
        for j in range(d):
            m[j] = v[j]
        for e in range(nsel):
            j = sel[e]
            m[j] = v[j] - sval[e]
            x[j] -= sval[e]


@njit(cache=True, nogil=True)
def run_steps_shared(x, m,
                     indptr, indices, data, y, lam, obj_code,
                     comp_code, k, p, s,
                     etas, rng, n,
                     samples_out, nnz_out):
    """Shared-x segment: per-step snapshot read, private m, atomic writes."""
    d = x.shape[0]
    snap = np.empty(d)
    g = np.empty(d)
    v = np.empty(d)
    sel = np.empty(d, np.int64)
    sval = np.empty(d)
    for t in range(etas.shape[0]):
        i = rng.integers(0, n)
        samples_out[t] = i
        eta = etas[t]
        for j in range(d):
            snap[j] = x[j]
        lo = indptr[i]
        hi = indptr[i + 1]
        margin = 0.0
        for ptr in range(lo, hi):
            margin += data[ptr] * snap[indices[ptr]]
        c = _coef(obj_code, y[i], margin)
        for j in range(d):
            g[j] = lam * snap[j]
        for ptr in range(lo, hi):
            g[indices[ptr]] += c * data[ptr]
        for j in range(d):
            v[j] = m[j] + eta * g[j]
        nsel = _select_into(comp_code, v, k, p, s, rng, sel, sval)
        nnz_out[t] = nsel
        for j in range(d):
            m[j] = v[j]
        for e in range(nsel):
            j = sel[e]
            m[j] = v[j] - sval[e]
            _atomic_fsub(x, j, sval[e])


@njit(cache=True, nogil=True)
def shared_read_step(x, snap, m,
                     indptr, indices, data, y, lam, obj_code,
                     comp_code, k, p, s,
                     i, eta, rng, sel_buf, sval_buf):
    """Traced step, read half: snapshot x, compute update, refresh m."""
    d = x.shape[0]
    for j in range(d):
        snap[j] = x[j]
    g = np.empty(d)
    v = np.empty(d)
    lo = indptr[i]
    hi = indptr[i + 1]
    margin = 0.0
    for ptr in range(lo, hi):
        margin += data[ptr] * snap[indices[ptr]]
    c = _coef(obj_code, y[i], margin)
    for j in range(d):
        g[j] = lam * snap[j]
    for ptr in range(lo, hi):
        g[indices[ptr]] += c * data[ptr]
    for j in range(d):
        v[j] = m[j] + eta * g[j]
    nsel = _select_into(comp_code, v, k, p, s, rng, sel_buf, sval_buf)
    for j in range(d):
        m[j] = v[j]
    for e in range(nsel):
        j = sel_buf[e]
        m[j] = v[j] - sval_buf[e]
    return nsel


@njit(cache=True, nogil=True)
def shared_write_step(x, snap, sel_buf, sval_buf, nsel):
    """Traced step, write half: count foreign writes since snapshot, apply."""
    stale = 0
    for j in range(x.shape[0]):
        if x[j] != snap[j]:
            stale += 1
    for e in range(nsel):
        _atomic_fsub(x, sel_buf[e], sval_buf[e])
    return stale


def topk_select(v, k):
    sel = np.empty(v.shape[0], dtype=np.int64)
    n = _topk_into(v, k, sel)
    return sel[:n].copy()


def randk_select(d, k, rng):
    sel = np.empty(d, dtype=np.int64)
    n = _randk_into(d, k, rng, sel)
    return sel[:n].copy()


def randp_select(d, p, rng):
    sel = np.empty(1, dtype=np.int64)
    n = _randp_into(d, p, rng, sel)
    return sel[:n].copy()


def qsgd_quantize(v, s, rng):
    sel = np.empty(v.shape[0], dtype=np.int64)
    sval = np.empty(v.shape[0])
    n = _qsgd_into(v, s, rng, sel, sval)
    return sel[:n].copy(), sval[:n].copy()


def warmup():
    """Compile every kernel signature once on toy inputs."""
    d, n = 3, 2
    indptr = np.array([0, 2, 3], dtype=np.int64)
    indices = np.array([0, 2, 1], dtype=np.int64)
    data = np.array([1.0, -0.5, 2.0])
    y = np.array([1.0, -1.0])
    rng = np.random.default_rng(0)
    for comp_code, k, p, s in ((0, 0, 0.0, 0), (1, 1, 0.0, 0), (2, 2, 0.0, 0),
                               (3, 0, 0.5, 0), (4, 0, 0.0, 4)):
        for obj_code in (0, 1):
            x = np.zeros(d)
            m = np.zeros(d)
            acc = np.zeros(d)
            xt = np.zeros(d)
            etas = np.full(2, 0.1)
            weights = np.ones(2)
            samples = np.empty(2, dtype=np.int64)
            nnz = np.empty(2, dtype=np.int64)
            run_steps(x, m, acc, xt, indptr, indices, data, y, 0.1, obj_code,
                      comp_code, k, p, s, etas, weights, rng, n, True, True,
                      samples, nnz)
            run_steps_shared(x, m, indptr, indices, data, y, 0.1, obj_code,
                             comp_code, k, p, s, etas, rng, n, samples, nnz)
            snap = np.empty(d)
            sel = np.empty(d, dtype=np.int64)
            sval = np.empty(d)
            ns = shared_read_step(x, snap, m, indptr, indices, data, y, 0.1,
                                  obj_code, comp_code, k, p, s, 0, 0.1, rng,
                                  sel, sval)
            shared_write_step(x, snap, sel, sval, ns)
