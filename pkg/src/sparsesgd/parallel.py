"""Lock-free shared-memory variant: W threads own private memories m_w and
apply sparse updates to one shared iterate without locks.

Each worker repeats: snapshot x, compute its error-feedback update from the
snapshot, subtract the compressed entries from the shared x coordinate-wise
(atomically on the numba backend). Nothing synchronizes the workers, so a
write can land on top of concurrent writes; sparsity keeps collisions rare.

Tracing (cfg.trace) splits every step into a read half and a write half
around an os.sched_yield(), so on any core count other workers get scheduled
inside the window and the write half can count how many coordinates moved
since the snapshot. That count per write is the staleness record; with one
worker it is exactly zero. Untraced runs execute whole segments inside
nogil kernels and are free-running.

Checkpoint rows read the shared x while others may be writing; per-element
float64 reads do not tear on the supported platforms, but the vector as a
whole is a racy snapshot, good for monitoring only.
"""
from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from . import comm
from .compression import CompressorSpec
from .metrics import RunMetrics
from .objective import Objective, full_value, grad_norm_bound_estimate
from .optimizer import StepSchedule, _checkpoint_boundaries, _kernel_params


@dataclass
class ParallelConfig:
    """Worker count, per-worker step budget, and the shared update recipe.

    Stepsizes use the worker-local step counter. workers beyond the host's
    cpu count are refused unless allow_oversubscription is set (the traced
    probe works fine oversubscribed; throughput does not).
    """

    workers: int
    steps_per_worker: int
    comp: CompressorSpec
    schedule: StepSchedule = field(default_factory=StepSchedule.inverse_t)
    base_seed: int = 0
    checkpoint_every: int | None = None
    trace: bool = False
    timing: bool = False
    allow_oversubscription: bool = False
    label: str = "hogwild"

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.steps_per_worker < 1:
            raise ValueError("steps_per_worker must be >= 1")
        ncpu = os.cpu_count() or 1
        if self.workers > ncpu and not self.allow_oversubscription:
            raise ValueError(
                f"workers={self.workers} exceeds cpu_count={ncpu}; "
                "set allow_oversubscription=True to run anyway")


@dataclass
class ParallelResult:
    """Final shared iterate plus per-worker metrics and staleness records."""

    x: np.ndarray
    workers: list
    staleness: list | None
    total_writes: int
    summary: dict


def _segment_bits(comp: CompressorSpec, steps: int, nnz: int, d: int,
                  model: comm.CostModel, sparse_unit: int) -> float:
    if comp.kind == "identity":
        return steps * d * model.dense_bits_per_coord
    if comp.kind == "qsgd":
        return steps * comm.bits_qsgd(d, comp.s)
    return nnz * sparse_unit


def run_parallel(obj: Objective, cfg: ParallelConfig,
                 x0: np.ndarray | None = None,
                 optimum_value: float | None = None,
                 cost_model: comm.CostModel | None = None) -> ParallelResult:
    """Run cfg.workers threads against one shared iterate.

    Worker w draws from default_rng([base_seed, w]) in the same per-step
    order as the sequential loop, so a single worker reproduces the
    sequential run bitwise.
    """
    if cfg.comp.k is not None and not 1 <= cfg.comp.k <= obj.d:
        raise ValueError(f"k={cfg.comp.k} out of range [1, {obj.d}]")
    if obj.n < 1:
        raise ValueError("objective has no examples to sample")
    K = backend.kernels()
    model = cost_model or comm.CostModel()
    ds = obj.dataset
    d = obj.d
    W = cfg.workers
    T = cfg.steps_per_worker
    kk, pp, ss = _kernel_params(cfg.comp)
    sparse_unit = model.value_bits + model.index_bits_for(d)

    x = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
    g2_initial = grad_norm_bound_estimate(obj, [x.copy()])
    bounds = _checkpoint_boundaries(T, cfg.checkpoint_every, obj.n)

    worker_metrics: list = [None] * W
    worker_stale: list = [None] * W
    worker_writes = [0] * W
    errors: list = [None] * W
    barrier = threading.Barrier(W)

    def record_row(rows, t1, m, bits_cum, elapsed):
        x_snap = x.copy()  # racy monitoring copy
        val = full_value(obj, x_snap)
        rows["iters"].append(t1)
        rows["objective"].append(val)
        rows["subopt"].append(val - optimum_value if optimum_value is not None else np.nan)
        rows["mem"].append(float(m @ m))
        rows["bits"].append(bits_cum)
        rows["ms"].append(elapsed * 1e3 if cfg.timing else np.nan)
        rows["g2"].append(grad_norm_bound_estimate(obj, [x_snap]))

    def finish_worker(w, rows, m, bits_cum, stale, elapsed):
        label = f"{cfg.label}/w{w}"
        summary = {
            "label": label, "worker": w, "workers": W, "T": T,
            "seed": cfg.base_seed, "backend": backend.backend_name(),
            "compressor": cfg.comp.label(), "schedule": cfg.schedule.kind,
            "final_objective": rows["objective"][-1],
            "total_bits": bits_cum,
            "writes": worker_writes[w],
            "traced": cfg.trace,
            "elapsed_ms": elapsed * 1e3 if cfg.timing else None,
        }
        if stale is not None:
            arr = np.asarray(stale, dtype=np.int64)
            summary["stale_events"] = int(np.count_nonzero(arr))
            summary["stale_total"] = int(arr.sum())
            worker_stale[w] = arr
        worker_metrics[w] = RunMetrics(
            label=label,
            iters=np.asarray(rows["iters"], dtype=np.int64),
            objective=np.asarray(rows["objective"]),
            subopt=np.asarray(rows["subopt"]),
            mem_sq_norm=np.asarray(rows["mem"]),
            bits_cum=np.asarray(rows["bits"]),
            ms=np.asarray(rows["ms"]),
            g2=np.asarray(rows["g2"]),
            g2_initial=g2_initial,
            summary=summary,
        )

    def untraced_worker(w):
        rng = np.random.default_rng([cfg.base_seed, w])
        m = np.zeros(d)
        rows = {key: [] for key in ("iters", "objective", "subopt", "mem",
                                    "bits", "ms", "g2")}
        bits_cum = 0.0
        elapsed = 0.0
        barrier.wait()
        t0 = 0
        for t1 in bounds:
            etas = cfg.schedule.etas(t0, t1)
            samples_out = np.empty(t1 - t0, dtype=np.int64)
            nnz_out = np.empty(t1 - t0, dtype=np.int64)
            tic = time.perf_counter()
            K.run_steps_shared(x, m,
                               ds.indptr, ds.indices, ds.values, ds.labels,
                               obj.lam, obj.kind_code,
                               cfg.comp.code, kk, pp, ss,
                               etas, rng, obj.n,
                               samples_out, nnz_out)
            elapsed += time.perf_counter() - tic
            nnz = int(nnz_out.sum())
            worker_writes[w] += nnz
            bits_cum += _segment_bits(cfg.comp, t1 - t0, nnz, d, model, sparse_unit)
            record_row(rows, t1, m, bits_cum, elapsed)
            t0 = t1
        finish_worker(w, rows, m, bits_cum, None, elapsed)

    def traced_worker(w):
        rng = np.random.default_rng([cfg.base_seed, w])
        m = np.zeros(d)
        snap = np.empty(d)
        sel_buf = np.empty(d, dtype=np.int64)
        sval_buf = np.empty(d)
        rows = {key: [] for key in ("iters", "objective", "subopt", "mem",
                                    "bits", "ms", "g2")}
        stale: list = []
        bits_cum = 0.0
        elapsed = 0.0
        barrier.wait()
        next_bound = 0
        tic = time.perf_counter()
        for t in range(T):
            i = int(rng.integers(0, obj.n))
            eta = cfg.schedule.eta(t)
            nsel = K.shared_read_step(x, snap, m,
                                      ds.indptr, ds.indices, ds.values, ds.labels,
                                      obj.lam, obj.kind_code,
                                      cfg.comp.code, kk, pp, ss,
                                      i, eta, rng, sel_buf, sval_buf)
            os.sched_yield()  # widen the read->write window for the others
            stale.append(K.shared_write_step(x, snap, sel_buf, sval_buf, nsel))
            worker_writes[w] += nsel
            bits_cum += _segment_bits(cfg.comp, 1, nsel, d, model, sparse_unit)
            if t + 1 == bounds[next_bound]:
                elapsed += time.perf_counter() - tic
                record_row(rows, t + 1, m, bits_cum, elapsed)
                next_bound += 1
                tic = time.perf_counter()
        finish_worker(w, rows, m, bits_cum, stale, elapsed)

    def guarded(target, w):
        try:
            target(w)
        except BaseException as exc:  # surfaced after join
            errors[w] = exc
            try:
                barrier.abort()
            except Exception:
                pass

    target = traced_worker if cfg.trace else untraced_worker
    threads = [threading.Thread(target=guarded, args=(target, w), name=f"sgd-w{w}")
               for w in range(W)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for exc in errors:
        if exc is not None:
            raise exc

    total_writes = int(sum(worker_writes))
    summary = {
        "label": cfg.label, "workers": W, "steps_per_worker": T,
        "backend": backend.backend_name(), "compressor": cfg.comp.label(),
        "schedule": cfg.schedule.kind, "traced": cfg.trace,
        "final_objective": full_value(obj, x),
        "suboptimality": (full_value(obj, x) - optimum_value)
                         if optimum_value is not None else None,
        "total_writes": total_writes,
        "total_bits": float(sum(wm.bits_cum[-1] for wm in worker_metrics)),
    }
    return ParallelResult(x=x, workers=worker_metrics,
                          staleness=worker_stale if cfg.trace else None,
                          total_writes=total_writes, summary=summary)


def staleness_probe(result: ParallelResult) -> np.ndarray:
    """Histogram over all recorded writes of how many coordinates changed
    between a worker's snapshot and its write; bin c counts writes that saw
    c moved coordinates. Length d+1. Requires a traced run."""
    if result.staleness is None:
        raise ValueError("run had trace disabled; no staleness was recorded")
    d = result.x.shape[0]
    pooled = np.concatenate([s for s in result.staleness]) if result.staleness \
        else np.zeros(0, dtype=np.int64)
    return np.bincount(pooled, minlength=d + 1)
