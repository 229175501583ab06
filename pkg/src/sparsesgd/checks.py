"""Built-in numeric self-checks, runnable from the CLI as `sparsesgd check`.

Each suite returns (passed, detail); run_checks collects them as
(name, passed, detail) triples. The top-k selector is injectable so a
deliberately corrupted rule (for example a flipped tie-break) can be fed
through to show which suites catch it.
"""
from __future__ import annotations

import numpy as np

from . import compression
from .compression import CompressorSpec, contraction_estimate
from .data import make_quadratic, make_ridge_quadratic, make_synthetic_logistic
from .objective import Objective, full_grad, full_value, stochastic_grad
from .optimizer import (AveragingScheme, StepSchedule, _accumulate_weight_sum,
                        memory_bound_margins, replay_virtual, run,
                        shift_admissible, shift_for, weight_sum_closed_form)

_WITNESSES = (
    np.array([3.0, -1.0, 0.5, 0.25]),
    np.array([2.0, -2.0, 1.0, -1.0, 0.5]),
    np.array([1e-3, 4.0, -4.0, 2.0, 0.0, -7.5]),
)


def check_contraction_enumeration(topk_fn=None) -> tuple[bool, str]:
    """Exact E||x - comp(x)||^2 / ||x||^2 against the 1 - k_eff/d line:
    <= for top_k, equality for rand_k and rand_p, zero for identity."""
    topk_fn = topk_fn or compression.top_k
    for x in _WITNESSES:
        d = x.shape[0]
        xsq = float(x @ x)
        if contraction_estimate(CompressorSpec.identity(), x, exact=True) != 0.0:
            return False, "identity left a residual"
        for k in range(1, d + 1):
            upd = topk_fn(x, k)
            r = x - upd.to_dense()
            ratio = float(r @ r) / xsq
            allowed = 1.0 - k / d
            if ratio > allowed + 1e-12:
                return False, f"top_{k} ratio {ratio:.6f} > {allowed:.6f} on d={d}"
            exact = contraction_estimate(CompressorSpec.rand_k(k), x, exact=True)
            if abs(exact - allowed) > 1e-9:
                return False, f"rand_{k} enumeration {exact:.9f} != {allowed:.9f}"
        for p in (0.1, 0.5, 1.0):
            exact = contraction_estimate(CompressorSpec.rand_p(p), x, exact=True)
            if abs(exact - (1.0 - p / d)) > 1e-9:
                return False, f"rand_p p={p} enumeration off by {abs(exact - (1 - p / d)):.2e}"
    return True, "exact ratios match 1 - k_eff/d on all witnesses"


def check_topk_determinism(topk_fn=None) -> tuple[bool, str]:
    """Ties by magnitude must resolve to the lowest index, twice in a row,
    with sorted indices and values copied bitwise from the input."""
    topk_fn = topk_fn or compression.top_k
    cases = (
        (np.array([1.0, -1.0, 0.5]), 1, [0]),
        (np.array([2.0, 2.0, -2.0, 1.0]), 2, [0, 1]),
        (np.array([0.0, 0.0, 1.0]), 2, [0, 2]),
        (np.array([-3.0, 3.0, 3.0, -3.0]), 3, [0, 1, 2]),
    )
    for x, k, expect in cases:
        a = topk_fn(x, k)
        b = topk_fn(x, k)
        if not np.array_equal(a.indices, b.indices) or not np.array_equal(a.values, b.values):
            return False, f"two calls disagreed on x={x.tolist()}, k={k}"
        if list(a.indices) != expect:
            return False, (f"x={x.tolist()}, k={k}: got indices {a.indices.tolist()}, "
                           f"want {expect}")
        if np.any(np.diff(a.indices) <= 0):
            return False, f"indices not strictly increasing on x={x.tolist()}"
        if not np.array_equal(a.values, x[a.indices]):
            return False, f"values were recomputed, not copied, on x={x.tolist()}"
    return True, f"{len(cases)} tie cases resolve to the lowest index, repeatably"


def check_virtual_sequence_replay() -> tuple[bool, str]:
    """Replay a short run and confirm the uncompressed sequence satisfies
    xt_t - x_t = -m_t at every boundary, and the replayed iterate is the
    original bitwise."""
    prob = make_synthetic_logistic(n=12, d=6, seed=3)
    obj = Objective.from_problem(prob)
    sched = StepSchedule.practical(gamma=1.0, lam=obj.lam, a=3.0)
    x, _, metrics = run(obj, sched, CompressorSpec.top_k(2), T=60,
                        seed=11, checkpoints=15)
    res = replay_virtual(obj, metrics.replay)
    if not np.array_equal(res.x_final, x):
        return False, "replayed iterate differs from the original run"
    scale = 1.0 + float(res.x_norms.max())
    gap = float(res.gaps.max())
    if gap > 1e-8 * scale:
        return False, f"max identity gap {gap:.3e} exceeds 1e-8*(1+||x||)"
    return True, f"max gap {gap:.3e} over {len(res.gaps)} boundaries"


def check_memory_bound_margin() -> tuple[bool, str]:
    """||m_t||^2 stays under eta_t^2 (4a/(a-4)) (d/k)^2 G^2 along a run with
    the prescribed shift, using the trajectory-max empirical G^2."""
    d, k, alpha = 8, 1, 5.0
    # Unit-norm rows keep per-sample smoothness near 1, so the prescribed
    # shift's eta_0 is inside the single-sample stability region.
    prob = make_ridge_quadratic(n=6, d=d, kappa=4.0, seed=7, noise_std=0.1)
    obj = Objective.from_problem(prob)
    a = shift_for(alpha, d, k)
    if not shift_admissible(a, alpha, d, k):
        return False, f"prescribed shift a={a} fails its own admissibility test"
    sched = StepSchedule.theoretical(mu=prob.mu, a=a)
    _, _, metrics = run(obj, sched, CompressorSpec.top_k(k), T=400,
                        seed=5, checkpoints=50,
                        optimum_value=prob.optimum_value)
    margins = memory_bound_margins(metrics, sched, alpha, d, k, metrics.g2_max)
    if np.any(margins < 0):
        t_bad = int(metrics.iters[int(np.argmin(margins))])
        return False, f"bound violated at t={t_bad} by {-margins.min():.3e}"
    return True, f"min margin {margins.min():.3e} across {len(margins)} checkpoints"


def check_averaging_closed_form() -> tuple[bool, str]:
    """S_T from the closed form against genuine summation, plus one pinned
    value S_3(a=2) = 4 + 9 + 16 = 29."""
    if weight_sum_closed_form(3, 2) != 29:
        return False, f"S_3(a=2) = {weight_sum_closed_form(3, 2)}, want 29"
    for a in (1, 2, 10):
        for T in (1, 2, 3, 7, 50, 1000):
            closed = weight_sum_closed_form(T, a)
            summed = _accumulate_weight_sum(a, 0, T)
            if closed != summed:
                return False, f"integer mismatch at T={T}, a={a}: {closed} != {summed}"
    for a in (1.5, 2.25):
        for T in (3, 64, 500):
            closed = weight_sum_closed_form(T, a)
            summed = _accumulate_weight_sum(a, 0, T)
            if abs(closed - summed) > 1e-9 * abs(closed):
                return False, f"float mismatch at T={T}, a={a}"
            w = AveragingScheme.weighted_quadratic(a).weights(0, T)
            if abs(float(w.sum()) - closed) > 1e-9 * abs(closed):
                return False, f"weights() sum off at T={T}, a={a}"
    return True, "closed form matches summation on the integer and float grids"


def _sample_value(obj: Objective, x: np.ndarray, i: int) -> float:
    """Single-example objective via an independent formula (logaddexp)."""
    idx, vals = obj.dataset.row(i)
    margin = float(vals @ x[idx])
    y = float(obj.dataset.labels[i])
    reg = 0.5 * obj.lam * float(x @ x)
    if obj.kind == "logistic":
        return float(np.logaddexp(0.0, -y * margin)) + reg
    return 0.5 * (margin - y) ** 2 + reg


def check_gradient_finite_difference() -> tuple[bool, str]:
    """Analytic gradients against central differences, both objectives."""
    rng = np.random.default_rng(19)
    h = 1e-6
    worst = 0.0
    for prob in (make_synthetic_logistic(n=8, d=5, seed=2),
                 make_quadratic(d=5, mu=0.7, L=3.0, seed=4, noise_std=0.2)):
        obj = Objective.from_problem(prob)
        x = rng.normal(size=obj.d)
        g = full_grad(obj, x)
        for j in range(obj.d):
            e = np.zeros(obj.d)
            e[j] = h
            fd = (full_value(obj, x + e) - full_value(obj, x - e)) / (2 * h)
            worst = max(worst, abs(fd - g[j]) / (1.0 + abs(g[j])))
        for i in range(obj.n):
            gi = stochastic_grad(obj, x, i).gradient
            for j in range(obj.d):
                e = np.zeros(obj.d)
                e[j] = h
                fd = (_sample_value(obj, x + e, i) - _sample_value(obj, x - e, i)) / (2 * h)
                worst = max(worst, abs(fd - gi[j]) / (1.0 + abs(gi[j])))
    if worst > 1e-5:
        return False, f"worst relative FD error {worst:.3e} > 1e-5"
    return True, f"worst relative FD error {worst:.3e}"


_SUITES = (
    ("contraction_enumeration", check_contraction_enumeration, True),
    ("topk_determinism", check_topk_determinism, True),
    ("virtual_sequence_replay", check_virtual_sequence_replay, False),
    ("memory_bound_margin", check_memory_bound_margin, False),
    ("averaging_closed_form", check_averaging_closed_form, False),
    ("gradient_finite_difference", check_gradient_finite_difference, False),
)


def run_checks(topk_fn=None) -> list[tuple[str, bool, str]]:
    """Run every suite; returns [(name, passed, detail), ...]."""
    out = []
    for name, fn, takes_topk in _SUITES:
        passed, detail = fn(topk_fn) if takes_topk else fn()
        out.append((name, passed, detail))
    return out
