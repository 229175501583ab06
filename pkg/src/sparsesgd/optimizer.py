"""Error-feedback SGD: schedules, weighted averaging, the step/run loops,
and the runtime diagnostics (virtual-sequence replay, memory-norm bound,
sparsification variance probe).

The update, with comp a k-contraction and m_0 = 0:

    g_t     = comp(m_t + eta_t * grad f_{i_t}(x_t))
    x_{t+1} = x_t - g_t            (only compressed coordinates written)
    m_{t+1} = (m_t + eta_t * grad f_{i_t}(x_t)) - g_t

run() drives the active backend's segment kernel; step() is a plain numpy
single-step reference that consumes the Generator in the same order, so a
loop of step() calls reproduces run() bitwise.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import backend
from . import comm
from .compression import CompressorSpec, compress
from .metrics import RunMetrics
from .objective import (Objective, full_grad, full_value,
                        grad_norm_bound_estimate, stochastic_grad)

_SCHEDULE_KINDS = ("theoretical", "practical", "inverse_t", "constant")


@dataclass(frozen=True)
class StepSchedule:
    """Nonincreasing stepsize sequences.

    theoretical: eta_t = 8 / (mu * (a + t))      (needs a > 1)
    practical:   eta_t = gamma / (lam * (t + a))
    inverse_t:   eta_t = 1 / (1 + t)
    constant:    eta_t = eta0
    """

    kind: str
    mu: float = 0.0
    gamma: float = 0.0
    lam: float = 0.0
    a: float = 0.0
    eta0: float = 0.0

    def __post_init__(self):
        if self.kind not in _SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "theoretical":
            if self.mu <= 0 or self.a <= 1:
                raise ValueError("theoretical schedule needs mu > 0 and a > 1")
        elif self.kind == "practical":
            if self.gamma <= 0 or self.lam <= 0 or self.a <= 0:
                raise ValueError("practical schedule needs gamma, lam, a > 0")
        elif self.kind == "constant":
            if self.eta0 <= 0:
                raise ValueError("constant schedule needs eta0 > 0")

    @classmethod
    def theoretical(cls, mu: float, a: float) -> "StepSchedule":
        return cls(kind="theoretical", mu=mu, a=a)

    @classmethod
    def practical(cls, gamma: float, lam: float, a: float) -> "StepSchedule":
        return cls(kind="practical", gamma=gamma, lam=lam, a=a)

    @classmethod
    def inverse_t(cls) -> "StepSchedule":
        return cls(kind="inverse_t")

    @classmethod
    def constant(cls, eta0: float) -> "StepSchedule":
        return cls(kind="constant", eta0=eta0)

    @classmethod
    def bottou(cls, gamma0: float, lam: float) -> "StepSchedule":
        """eta_t = gamma0 / (1 + gamma0 * lam * t), as a practical schedule."""
        if gamma0 <= 0 or lam <= 0:
            raise ValueError("bottou schedule needs gamma0, lam > 0")
        return cls.practical(gamma=1.0, lam=lam, a=1.0 / (gamma0 * lam))

    def eta(self, t: int) -> float:
        if self.kind == "theoretical":
            return 8.0 / (self.mu * (self.a + t))
        if self.kind == "practical":
            return self.gamma / (self.lam * (t + self.a))
        if self.kind == "inverse_t":
            return 1.0 / (1.0 + t)
        return self.eta0

    def etas(self, t0: int, t1: int) -> np.ndarray:
        """Vector of eta_t for t in [t0, t1); same arithmetic as eta()."""
        t = np.arange(t0, t1, dtype=np.float64)
        if self.kind == "theoretical":
            return 8.0 / (self.mu * (self.a + t))
        if self.kind == "practical":
            return self.gamma / (self.lam * (t + self.a))
        if self.kind == "inverse_t":
            return 1.0 / (1.0 + t)
        return np.full(t1 - t0, self.eta0)


@dataclass(frozen=True)
class AveragingScheme:
    """weighted_quadratic: x_bar = sum w_t x_t / S_T with w_t = (a+t)^2."""

    kind: str
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in ("weighted_quadratic", "last_iterate"):
            raise ValueError(f"unknown averaging kind {self.kind!r}")

    @classmethod
    def weighted_quadratic(cls, a: float) -> "AveragingScheme":
        return cls(kind="weighted_quadratic", a=a)

    @classmethod
    def last_iterate(cls) -> "AveragingScheme":
        return cls(kind="last_iterate")

    @property
    def is_weighted(self) -> bool:
        return self.kind == "weighted_quadratic"

    def weights(self, t0: int, t1: int) -> np.ndarray:
        t = np.arange(t0, t1, dtype=np.float64)
        return (self.a + t) ** 2


def weight_sum_closed_form(T: int, a) -> int | float:
    """S_T = sum_{t<T} (a+t)^2 = (T/6)(2T^2 + 6aT - 3T + 6a^2 - 6a + 1).

    Exact integer arithmetic when a is integral (the polynomial is always
    divisible by 6 in that case).
    """
    if float(a).is_integer():
        ai = int(a)
        num = T * (2 * T * T + 6 * ai * T - 3 * T + 6 * ai * ai - 6 * ai + 1)
        assert num % 6 == 0
        return num // 6
    return T * (2.0 * T * T + 6.0 * a * T - 3.0 * T + 6.0 * a * a - 6.0 * a + 1.0) / 6.0


def _accumulate_weight_sum(a, t0: int, t1: int) -> int | float:
    """Genuine summation (not the closed form) so tests can compare the two."""
    if float(a).is_integer():
        ai = int(a)
        return sum((ai + t) * (ai + t) for t in range(t0, t1))
    return math.fsum((a + t) ** 2 for t in range(t0, t1))


def shift_for(alpha: float, d: int, k: float) -> float:
    """Stepsize shift a = (alpha + 2) * d / k that keeps the memory bounded."""
    if alpha <= 4:
        raise ValueError("alpha must exceed 4")
    if d < 1 or k <= 0:
        raise ValueError("need d >= 1 and k > 0")
    return (alpha + 2.0) * d / k


def shift_admissible(a: float, alpha: float, d: int, k: float) -> bool:
    """Exact admissibility test a >= ((alpha+1) d/k + rho) / (rho + 1)."""
    if alpha <= 4:
        raise ValueError("alpha must exceed 4")
    rho = 4.0 * alpha / ((alpha - 4.0) * (alpha + 1.0) ** 2)
    return a >= ((alpha + 1.0) * (d / k) + rho) / (rho + 1.0)


def memory_bound_constant(alpha: float) -> float:
    """4*alpha/(alpha-4); equals 20 at alpha=5."""
    if alpha <= 4:
        raise ValueError("alpha must exceed 4")
    return 4.0 * alpha / (alpha - 4.0)


@dataclass
class OptimizerState:
    """Single-owner loop state; see module docstring for the update."""

    x: np.ndarray
    m: np.ndarray
    t: int
    acc: np.ndarray
    weight_sum: int | float
    rng: np.random.Generator
    seed: int
    x0: np.ndarray
    xtilde: np.ndarray | None = None
    record_log: bool = False
    log_samples: list = field(default_factory=list)
    log_etas: list = field(default_factory=list)

    @classmethod
    def init(cls, d: int, seed: int = 0, x0: np.ndarray | None = None,
             track_virtual: bool = False, record_log: bool = False) -> "OptimizerState":
        x = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
        return cls(
            x=x.copy(), m=np.zeros(d), t=0, acc=np.zeros(d), weight_sum=0,
            rng=np.random.default_rng([seed, 0]), seed=seed, x0=x.copy(),
            xtilde=x.copy() if track_virtual else None,
            record_log=record_log,
        )


def step(state: OptimizerState, obj: Objective, schedule: StepSchedule,
         comp: CompressorSpec, averaging: AveragingScheme | None = None) -> OptimizerState:
    """One update in plain numpy; draw order and arithmetic match run()."""
    if state.x.shape[0] != obj.d:
        raise ValueError("state/objective dimension mismatch")
    i = int(state.rng.integers(0, obj.n))
    if averaging is not None and averaging.is_weighted:
        w = (averaging.a + state.t) ** 2
        state.acc += w * state.x
        state.weight_sum += _accumulate_weight_sum(averaging.a, state.t, state.t + 1)
    eta = schedule.eta(state.t)
    g = stochastic_grad(obj, state.x, i).gradient
    v = state.m + eta * g
    if state.xtilde is not None:
        state.xtilde -= eta * g
    upd = compress(v, comp, state.rng)
    m_new = v.copy()
    if upd.indices.shape[0]:
        m_new[upd.indices] = v[upd.indices] - upd.values
        state.x[upd.indices] -= upd.values
    state.m = m_new
    if state.record_log:
        state.log_samples.append(i)
        state.log_etas.append(eta)
    state.t += 1
    return state


@dataclass
class ReplayLog:
    """Everything needed to re-execute a run deterministically."""

    x0: np.ndarray
    seed: int
    comp: CompressorSpec
    boundaries: list
    samples: np.ndarray
    etas: np.ndarray

    @classmethod
    def from_state(cls, state: OptimizerState, comp: CompressorSpec) -> "ReplayLog":
        if not state.record_log:
            raise ValueError("state was not recording a log")
        return cls(x0=state.x0.copy(), seed=state.seed, comp=comp,
                   boundaries=[state.t],
                   samples=np.asarray(state.log_samples, dtype=np.int64),
                   etas=np.asarray(state.log_etas, dtype=np.float64))


@dataclass
class ReplayResult:
    iters: np.ndarray
    gaps: np.ndarray
    x_norms: np.ndarray
    x_final: np.ndarray
    m_final: np.ndarray
    xtilde_final: np.ndarray


def _checkpoint_boundaries(T: int, checkpoints, n: int) -> list:
    if checkpoints is None:
        every = max(1, round(n / 10))
    elif isinstance(checkpoints, int):
        if checkpoints < 1:
            raise ValueError("checkpoint cadence must be >= 1")
        every = checkpoints
    else:
        bounds = sorted({int(c) for c in checkpoints if 0 < int(c) <= T} | {T})
        return bounds
    bounds = list(range(every, T + 1, every))
    if not bounds or bounds[-1] != T:
        bounds.append(T)
    return bounds


def _kernel_params(comp: CompressorSpec) -> tuple[int, float, int]:
    return (int(comp.k or 0), float(comp.p or 0.0), int(comp.s or 0))


def run(obj: Objective, schedule: StepSchedule, comp: CompressorSpec, T: int,
        averaging: AveragingScheme | None = None, seed: int = 0,
        checkpoints=None, x0: np.ndarray | None = None,
        optimum_value: float | None = None, track_virtual: bool = False,
        timing: bool = False, cost_model: comm.CostModel | None = None,
        label: str = "run") -> tuple[np.ndarray, np.ndarray, RunMetrics]:
    """Execute T steps on the active backend; returns (x_T, x_avg, metrics).

    Checkpoints: cadence int, explicit iteration list, or None for one row
    every ~n/10 steps; a final row at T is always present. The replay log
    (sample indices, stepsizes, segment boundaries) rides along in
    metrics.replay.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if obj.n < 1:
        raise ValueError("objective has no examples to sample")
    if comp.k is not None and not 1 <= comp.k <= obj.d:
        raise ValueError(f"k={comp.k} out of range [1, {obj.d}]")
    averaging = averaging or AveragingScheme.last_iterate()
    model = cost_model or comm.CostModel()
    K = backend.kernels()
    ds = obj.dataset
    d = obj.d

    x = np.zeros(d) if x0 is None else np.array(x0, dtype=np.float64)
    x_start = x.copy()
    m = np.zeros(d)
    acc = np.zeros(d)
    xtilde = x.copy()
    rng = np.random.default_rng([seed, 0])
    weight_sum = 0
    bits_cum = 0.0
    elapsed = 0.0
    kk, pp, ss = _kernel_params(comp)

    bounds = _checkpoint_boundaries(T, checkpoints, obj.n)
    samples_log = np.empty(T, dtype=np.int64)
    etas_log = np.empty(T, dtype=np.float64)
    sparse_unit = model.value_bits + model.index_bits_for(d)

    iters, objs, subopts, mems, bits_col, ms_col, g2s = [], [], [], [], [], [], []
    g2_initial = grad_norm_bound_estimate(obj, [x])
    t0 = 0
    for t1 in bounds:
        etas = schedule.etas(t0, t1)
        weights = averaging.weights(t0, t1) if averaging.is_weighted else np.zeros(0)
        nnz_out = np.empty(t1 - t0, dtype=np.int64)
        tic = time.perf_counter()
        K.run_steps(x, m, acc, xtilde,
                    ds.indptr, ds.indices, ds.values, ds.labels,
                    obj.lam, obj.kind_code,
                    comp.code, kk, pp, ss,
                    etas, weights, rng, obj.n,
                    averaging.is_weighted, track_virtual,
                    samples_log[t0:t1], nnz_out)
        elapsed += time.perf_counter() - tic
        etas_log[t0:t1] = etas
        if averaging.is_weighted:
            weight_sum += _accumulate_weight_sum(averaging.a, t0, t1)
        if comp.kind == "identity":
            bits_cum += (t1 - t0) * d * model.dense_bits_per_coord
        elif comp.kind == "qsgd":
            bits_cum += (t1 - t0) * comm.bits_qsgd(d, comp.s)
        else:
            bits_cum += int(nnz_out.sum()) * sparse_unit
        iters.append(t1)
        objs.append(full_value(obj, x))
        subopts.append(objs[-1] - optimum_value if optimum_value is not None else np.nan)
        mems.append(float(m @ m))
        bits_col.append(bits_cum)
        ms_col.append(elapsed * 1e3 if timing else np.nan)
        g2s.append(grad_norm_bound_estimate(obj, [x]))
        t0 = t1

    if averaging.is_weighted:
        x_avg = acc / float(weight_sum)
    else:
        x_avg = x.copy()

    replay = ReplayLog(x0=x_start, seed=seed, comp=comp, boundaries=bounds,
                       samples=samples_log, etas=etas_log)
    metrics = RunMetrics(
        label=label,
        iters=np.asarray(iters, dtype=np.int64),
        objective=np.asarray(objs),
        subopt=np.asarray(subopts),
        mem_sq_norm=np.asarray(mems),
        bits_cum=np.asarray(bits_col),
        ms=np.asarray(ms_col),
        g2=np.asarray(g2s),
        g2_initial=g2_initial,
        summary={
            "label": label, "T": T, "seed": seed, "backend": backend.backend_name(),
            "compressor": comp.label(), "schedule": schedule.kind,
            "averaging": averaging.kind,
            "final_objective": objs[-1],
            "avg_objective": full_value(obj, x_avg),
            "suboptimality": (objs[-1] - optimum_value) if optimum_value is not None else None,
            "avg_suboptimality": (full_value(obj, x_avg) - optimum_value)
                                 if optimum_value is not None else None,
            "total_bits": bits_cum,
            "weight_sum": weight_sum if averaging.is_weighted else None,
            "g2_max": float(max([g2_initial] + g2s)),
            "elapsed_ms": elapsed * 1e3 if timing else None,
        },
        replay=replay,
    )
    return x, x_avg, metrics


def replay_virtual(obj: Objective, log: ReplayLog) -> ReplayResult:
    """Re-execute a logged run while integrating the uncompressed sequence
    xt_t = x_0 - sum eta_j grad f_{i_j}(x_j) alongside, and report
    ||(xt_t - x_t) + m_t|| at each boundary (zero in exact arithmetic).

    The sample indices are redrawn from the logged seed and must reproduce
    the log exactly; any divergence raises.
    """
    K = backend.kernels()
    ds = obj.dataset
    d = obj.d
    x = log.x0.copy()
    m = np.zeros(d)
    acc = np.zeros(d)
    xtilde = log.x0.copy()
    rng = np.random.default_rng([log.seed, 0])
    kk, pp, ss = _kernel_params(log.comp)
    T = log.samples.shape[0]
    if log.boundaries[-1] != T:
        raise ValueError("replay log boundaries inconsistent with sample count")
    gaps, xnorms, t0 = [], [], 0
    for t1 in log.boundaries:
        nsteps = t1 - t0
        samples_out = np.empty(nsteps, dtype=np.int64)
        nnz_out = np.empty(nsteps, dtype=np.int64)
        K.run_steps(x, m, acc, xtilde,
                    ds.indptr, ds.indices, ds.values, ds.labels,
                    obj.lam, obj.kind_code,
                    log.comp.code, kk, pp, ss,
                    log.etas[t0:t1], np.zeros(0), rng, obj.n,
                    False, True,
                    samples_out, nnz_out)
        if not np.array_equal(samples_out, log.samples[t0:t1]):
            raise RuntimeError("replay drew different sample indices than the log")
        gaps.append(float(np.linalg.norm((xtilde - x) + m)))
        xnorms.append(float(np.linalg.norm(x)))
        t0 = t1
    return ReplayResult(
        iters=np.asarray(log.boundaries, dtype=np.int64),
        gaps=np.asarray(gaps), x_norms=np.asarray(xnorms),
        x_final=x, m_final=m, xtilde_final=xtilde,
    )


def virtual_gap(state: OptimizerState, log: ReplayLog, obj: Objective) -> float:
    """||(xt_t - x_t) + m_t|| against the caller's state at its current t."""
    if state.t != log.samples.shape[0]:
        raise ValueError(f"state at t={state.t} but log has {log.samples.shape[0]} steps")
    if state.t == 0:
        return 0.0
    res = replay_virtual(obj, log)
    return float(np.linalg.norm((res.xtilde_final - state.x) + state.m))


def memory_bound(t: int, schedule: StepSchedule, alpha: float, d: int,
                 k: float, g2: float) -> float:
    """eta_t^2 * (4a/(a-4)) * (d/k)^2 * G^2, the memory-norm ceiling."""
    eta = schedule.eta(t)
    return eta * eta * memory_bound_constant(alpha) * (d / k) ** 2 * g2


def memory_bound_margin(state: OptimizerState, schedule: StepSchedule,
                        alpha: float, d: int, k: float, g2: float) -> float:
    """bound - ||m_t||^2; nonnegative along well-configured trajectories."""
    return memory_bound(state.t, schedule, alpha, d, k, g2) - float(state.m @ state.m)


def memory_bound_margins(metrics: RunMetrics, schedule: StepSchedule,
                         alpha: float, d: int, k: float, g2: float) -> np.ndarray:
    """Margin at every checkpoint of a finished run."""
    bounds = np.array([memory_bound(int(t), schedule, alpha, d, k, g2)
                       for t in metrics.iters])
    return bounds - metrics.mem_sq_norm


def variance_probe(obj: Objective, x: np.ndarray, k: int,
                   batch: int | None = None, trials: int = 1000,
                   rng: np.random.Generator | None = None,
                   exact: bool = False) -> tuple[float, float]:
    """Mean squared deviation of the rescaled sparsified stochastic gradient
    (d/k) * rand_k(grad f_i(x)) from the full gradient, for a single sample
    and for a mini-batch average of `batch` independent samples (default
    ceil(d/k), the size that cancels the blow-up).

    exact=True enumerates all (i, subset) outcomes; the batch value is then
    single/batch (independent averaging divides the deviation exactly).
    """
    d = obj.d
    if not 1 <= k <= d:
        raise ValueError(f"k={k} out of range [1, {d}]")
    tau = batch if batch is not None else math.ceil(d / k)
    if tau < 1:
        raise ValueError("batch must be >= 1")
    scale = d / k
    full = full_grad(obj, x)
    if exact:
        n_outcomes = obj.n * math.comb(d, k)
        if n_outcomes > 500_000:
            raise ValueError(f"{n_outcomes} outcomes is too many to enumerate")
        total = 0.0
        for i in range(obj.n):
            gi = stochastic_grad(obj, x, i).gradient
            for subset in combinations(range(d), k):
                est = np.zeros(d)
                idx = np.fromiter(subset, dtype=np.int64)
                est[idx] = scale * gi[idx]
                diff = est - full
                total += float(diff @ diff)
        single = total / n_outcomes
        return single, single / tau
    if rng is None:
        raise ValueError("Monte Carlo mode needs an rng")
    K = backend.kernels()

    def one_estimate():
        i = int(rng.integers(0, obj.n))
        gi = stochastic_grad(obj, x, i).gradient
        idx = K.randk_select(d, k, rng)
        est = np.zeros(d)
        est[idx] = scale * gi[idx]
        return est

    single_tot = 0.0
    batch_tot = 0.0
    for _ in range(trials):
        diff = one_estimate() - full
        single_tot += float(diff @ diff)
        avg = np.zeros(d)
        for _ in range(tau):
            avg += one_estimate()
        diff = avg / tau - full
        batch_tot += float(diff @ diff)
    return single_tot / trials, batch_tot / trials
