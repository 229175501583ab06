"""Stepsize schedules, weighted averaging, the step/run loops, replay and
the memory-bound and variance diagnostics."""
import math

import numpy as np
import pytest

from sparsesgd import (AveragingScheme, CompressorSpec, Dataset, Objective,
                       OptimizerState, ReplayLog, StepSchedule, bits_qsgd,
                       full_grad, full_value, memory_bound_constant,
                       make_quadratic, memory_bound, memory_bound_margin,
                       memory_bound_margins, replay_virtual, run,
                       shift_admissible, shift_for, step, stochastic_grad,
                       variance_probe, virtual_gap, weight_sum_closed_form)
from sparsesgd.optimizer import _accumulate_weight_sum


class TestStepSchedule:
    def test_theoretical_values(self):
        s = StepSchedule.theoretical(mu=1.0, a=10.0)
        assert s.eta(0) == 0.8
        assert s.eta(10) == pytest.approx(8.0 / 20.0)

    def test_practical_and_bottou(self):
        s = StepSchedule.practical(gamma=2.0, lam=0.5, a=4.0)
        assert s.eta(0) == pytest.approx(2.0 / (0.5 * 4.0))
        b = StepSchedule.bottou(gamma0=0.1, lam=0.5)
        for t in (0, 1, 7, 100):
            assert b.eta(t) == pytest.approx(0.1 / (1.0 + 0.1 * 0.5 * t), rel=1e-12)
        assert b.eta(0) == pytest.approx(0.1, rel=1e-12)

    def test_inverse_t_and_constant(self):
        assert StepSchedule.inverse_t().eta(0) == 1.0
        assert StepSchedule.inverse_t().eta(9) == 0.1
        assert StepSchedule.constant(0.3).eta(12345) == 0.3

    @pytest.mark.parametrize("sched", [
        StepSchedule.theoretical(mu=0.5, a=7.0),
        StepSchedule.practical(gamma=1.0, lam=0.2, a=3.0),
        StepSchedule.inverse_t(),
        StepSchedule.constant(0.05),
    ])
    def test_etas_matches_eta_and_is_nonincreasing(self, sched):
        vec = sched.etas(0, 50)
        scalar = np.array([sched.eta(t) for t in range(50)])
        np.testing.assert_array_equal(vec, scalar)  # same arithmetic, bitwise
        assert np.all(np.diff(vec) <= 0)
        np.testing.assert_array_equal(sched.etas(10, 20), scalar[10:20])

    def test_validation(self):
        with pytest.raises(ValueError):
            StepSchedule(kind="linear")
        with pytest.raises(ValueError):
            StepSchedule.theoretical(mu=0.0, a=10.0)
        with pytest.raises(ValueError):
            StepSchedule.theoretical(mu=1.0, a=1.0)
        with pytest.raises(ValueError):
            StepSchedule.practical(gamma=0.0, lam=1.0, a=1.0)
        with pytest.raises(ValueError):
            StepSchedule.constant(0.0)
        with pytest.raises(ValueError):
            StepSchedule.bottou(gamma0=0.0, lam=1.0)


class TestAveraging:
    def test_weights(self):
        av = AveragingScheme.weighted_quadratic(a=2.0)
        np.testing.assert_array_equal(av.weights(0, 3), [4.0, 9.0, 16.0])
        assert av.is_weighted
        assert not AveragingScheme.last_iterate().is_weighted
        with pytest.raises(ValueError):
            AveragingScheme(kind="uniform")


class TestWeightSum:
    def test_hand_value(self):
        # S_3 with a=2: 2^2 + 3^2 + 4^2
        assert weight_sum_closed_form(3, 2) == 29

    @pytest.mark.parametrize("a", [1, 2, 7, 14000])
    def test_closed_form_matches_summation_exactly(self, a):
        for T in (1, 2, 3, 10, 137, 1000):
            got = weight_sum_closed_form(T, a)
            assert isinstance(got, int)
            assert got == _accumulate_weight_sum(a, 0, T)

    def test_cubic_lower_bound(self):
        for a in (1, 7, 14000):
            for T in (1, 10, 10_000):
                assert 3 * weight_sum_closed_form(T, a) >= T**3

    def test_float_shift(self):
        got = weight_sum_closed_form(5, 1.5)
        assert isinstance(got, float)
        assert got == pytest.approx(sum((1.5 + t) ** 2 for t in range(5)), rel=1e-14)


class TestShift:
    def test_hand_values(self):
        assert shift_for(5.0, d=3, k=3) == 7.0
        assert shift_for(5.0, d=2000, k=1) == 14000.0

    @pytest.mark.parametrize("d,k", [(4, 4), (40, 4), (2000, 1)])
    def test_prescribed_shift_is_admissible(self, d, k):
        # covers d/k in {1, 10, 2000}
        assert shift_admissible(shift_for(5.0, d, k), 5.0, d, k)

    def test_too_small_shift_is_rejected(self):
        # alpha=5, d=k: threshold is (6 + rho)/(1 + rho) with rho = 5/9
        assert not shift_admissible(4.2, 5.0, d=4, k=4)
        assert shift_admissible(4.22, 5.0, d=4, k=4)

    def test_memory_constant(self):
        assert memory_bound_constant(5.0) == 20.0
        assert memory_bound_constant(8.0) == 8.0
        for fn in (lambda: shift_for(4.0, 2, 1),
                   lambda: shift_admissible(10.0, 4.0, 2, 1),
                   lambda: memory_bound_constant(4.0)):
            with pytest.raises(ValueError):
                fn()

    def test_shift_for_guards(self):
        with pytest.raises(ValueError):
            shift_for(5.0, d=0, k=1)
        with pytest.raises(ValueError):
            shift_for(5.0, d=2, k=0)


def _one_row_quadratic():
    # single example a = (0.5, 0.2), y = 1: grad at x=0 is (-0.5, -0.2)
    ds = Dataset.from_rows([([0, 1], [0.5, 0.2])], [1.0], d=2)
    return Objective(ds, lam=0.0, kind="quadratic")


class TestStep:
    def test_hand_example_top1(self):
        obj = _one_row_quadratic()
        state = OptimizerState.init(d=2, seed=0)
        step(state, obj, StepSchedule.constant(1.0), CompressorSpec.top_k(1))
        np.testing.assert_array_equal(state.x, [0.5, 0.0])
        np.testing.assert_array_equal(state.m, [0.0, -0.2])
        assert state.t == 1

    def test_memory_reinjection(self):
        # second step re-injects the dropped coordinate through the memory
        obj = _one_row_quadratic()
        state = OptimizerState.init(d=2, seed=0)
        sched = StepSchedule.constant(1.0)
        comp = CompressorSpec.top_k(1)
        step(state, obj, sched, comp)
        g = stochastic_grad(obj, state.x, 0).gradient
        v = state.m + 1.0 * g
        j = int(np.argmax(np.abs(v)))
        expect_x = state.x.copy()
        expect_x[j] -= v[j]
        expect_m = v.copy()
        expect_m[j] = 0.0
        step(state, obj, sched, comp)
        np.testing.assert_array_equal(state.x, expect_x)
        np.testing.assert_array_equal(state.m, expect_m)

    def test_dimension_mismatch(self, tiny_logistic_obj):
        state = OptimizerState.init(d=3, seed=0)
        with pytest.raises(ValueError):
            step(state, tiny_logistic_obj, StepSchedule.inverse_t(),
                 CompressorSpec.top_k(1))

    def test_identity_keeps_memory_zero(self, tiny_logistic_obj):
        state = OptimizerState.init(d=tiny_logistic_obj.d, seed=1)
        sched = StepSchedule.inverse_t()
        for _ in range(20):
            step(state, tiny_logistic_obj, sched, CompressorSpec.identity())
            np.testing.assert_array_equal(state.m, np.zeros(tiny_logistic_obj.d))

    def test_identity_is_vanilla_sgd(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        state = OptimizerState.init(d=obj.d, seed=4)
        sched = StepSchedule.inverse_t()
        rng = np.random.default_rng([4, 0])
        x = np.zeros(obj.d)
        for t in range(15):
            step(state, obj, sched, CompressorSpec.identity())
            i = int(rng.integers(0, obj.n))
            x = x - sched.eta(t) * stochastic_grad(obj, x, i).gradient
        np.testing.assert_array_equal(state.x, x)


@pytest.mark.parametrize("comp", [
    CompressorSpec.identity(),
    CompressorSpec.top_k(2),
    CompressorSpec.rand_k(2),
    CompressorSpec.rand_p(0.5),
    CompressorSpec.qsgd(4),
], ids=lambda c: c.label())
def test_step_loop_reproduces_run_bitwise(tiny_logistic_obj, comp):
    obj = tiny_logistic_obj
    T = 25
    sched = StepSchedule.practical(gamma=1.0, lam=obj.lam, a=5.0)
    avg = AveragingScheme.weighted_quadratic(a=3.0)
    state = OptimizerState.init(d=obj.d, seed=11, record_log=True)
    for _ in range(T):
        step(state, obj, sched, comp, avg)
    x, x_avg, metrics = run(obj, sched, comp, T, averaging=avg, seed=11)
    np.testing.assert_array_equal(x, state.x)
    np.testing.assert_array_equal(
        x_avg, state.acc / float(state.weight_sum))
    np.testing.assert_array_equal(metrics.replay.samples, state.log_samples)
    np.testing.assert_array_equal(metrics.replay.etas, state.log_etas)


class TestRun:
    def test_guards(self, tiny_logistic_obj):
        with pytest.raises(ValueError):
            run(tiny_logistic_obj, StepSchedule.inverse_t(),
                CompressorSpec.top_k(1), 0)
        with pytest.raises(ValueError):
            run(tiny_logistic_obj, StepSchedule.inverse_t(),
                CompressorSpec.top_k(99), 10)
        with pytest.raises(ValueError):
            run(tiny_logistic_obj, StepSchedule.inverse_t(),
                CompressorSpec.top_k(1), 10, checkpoints=0)

    def test_checkpoint_layouts(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        sched = StepSchedule.inverse_t()
        comp = CompressorSpec.top_k(1)
        _, _, m = run(obj, sched, comp, 10, checkpoints=3)
        np.testing.assert_array_equal(m.iters, [3, 6, 9, 10])
        _, _, m = run(obj, sched, comp, 10, checkpoints=[7, 3, 3, 20, 0])
        np.testing.assert_array_equal(m.iters, [3, 7, 10])
        # None: cadence ~ n/10 examples; n=12 rounds to every step
        _, _, m = run(obj, sched, comp, 5)
        np.testing.assert_array_equal(m.iters, [1, 2, 3, 4, 5])
        _, _, m = run(obj, sched, comp, 7, checkpoints=100)
        np.testing.assert_array_equal(m.iters, [7])

    def test_single_weighted_step_averages_to_x0(self, tiny_logistic_obj):
        x0 = np.full(tiny_logistic_obj.d, 0.25)
        _, x_avg, _ = run(tiny_logistic_obj, StepSchedule.inverse_t(),
                          CompressorSpec.top_k(1), 1,
                          averaging=AveragingScheme.weighted_quadratic(a=2.0),
                          x0=x0)
        np.testing.assert_array_equal(x_avg, x0)

    def test_metrics_columns(self, tiny_logistic, tiny_logistic_obj):
        obj = tiny_logistic_obj
        x, x_avg, m = run(obj, StepSchedule.inverse_t(), CompressorSpec.top_k(2),
                          20, seed=2, checkpoints=5, timing=True,
                          optimum_value=tiny_logistic.optimum_value,
                          label="probe")
        assert m.label == "probe"
        np.testing.assert_array_equal(m.iters, [5, 10, 15, 20])
        assert m.objective[-1] == full_value(obj, x)
        np.testing.assert_allclose(
            m.subopt, m.objective - tiny_logistic.optimum_value, rtol=0, atol=0)
        assert np.all(np.isfinite(m.ms)) and np.all(np.diff(m.ms) >= 0)
        assert m.summary["final_objective"] == m.objective[-1]
        assert m.summary["suboptimality"] == m.subopt[-1]
        assert m.summary["avg_objective"] == full_value(obj, x_avg)
        assert m.summary["g2_max"] >= m.g2_initial
        assert m.summary["weight_sum"] is None
        # without an optimum the column is NaN
        _, _, m2 = run(obj, StepSchedule.inverse_t(), CompressorSpec.top_k(2), 5)
        assert np.all(np.isnan(m2.subopt))
        assert np.all(np.isnan(m2.ms))

    def test_bits_accounting_exact(self, tiny_logistic_obj):
        obj = tiny_logistic_obj  # d=6: ceil_log2 = 3, sparse unit = 35 bits
        sched = StepSchedule.inverse_t()
        _, _, m = run(obj, sched, CompressorSpec.top_k(2), 20, checkpoints=4)
        np.testing.assert_array_equal(m.bits_cum, m.iters * 2 * 35)
        _, _, m = run(obj, sched, CompressorSpec.identity(), 20, checkpoints=4)
        np.testing.assert_array_equal(m.bits_cum, m.iters * 6 * 32)
        _, _, m = run(obj, sched, CompressorSpec.qsgd(4), 20, checkpoints=4)
        np.testing.assert_allclose(m.bits_cum, m.iters * bits_qsgd(6, 4))
        _, _, m = run(obj, sched, CompressorSpec.rand_p(0.5), 40, seed=3,
                      checkpoints=10)
        assert np.all(np.diff(m.bits_cum) >= 0)
        assert m.bits_cum[-1] <= 40 * 35  # at most one coordinate per step

    def test_deterministic_in_seed(self, tiny_logistic_obj):
        args = (tiny_logistic_obj, StepSchedule.inverse_t(),
                CompressorSpec.rand_k(2), 30)
        x1, _, m1 = run(*args, seed=9)
        x2, _, m2 = run(*args, seed=9)
        x3, _, _ = run(*args, seed=10)
        np.testing.assert_array_equal(x1, x2)
        np.testing.assert_array_equal(m1.replay.samples, m2.replay.samples)
        assert not np.array_equal(x1, x3)


def test_identity_run_reduces_suboptimality_10x():
    prob = make_quadratic(d=10, mu=0.5, L=2.0, seed=6, noise_std=0.1)
    obj = Objective.from_problem(prob)
    # single-sample stability on this design needs eta0 below 2 / max||a_i||^2
    sched = StepSchedule.bottou(gamma0=0.05, lam=prob.mu)
    x, _, _ = run(obj, sched, CompressorSpec.identity(), 500, seed=0,
                  optimum_value=prob.optimum_value)
    f0 = full_value(obj, np.zeros(obj.d)) - prob.optimum_value
    fT = full_value(obj, x) - prob.optimum_value
    assert fT <= f0 / 10.0


class TestReplay:
    def test_gap_small_along_a_real_run(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        _, _, m = run(obj, StepSchedule.inverse_t(), CompressorSpec.top_k(1),
                      200, seed=5, checkpoints=40)
        res = replay_virtual(obj, m.replay)
        np.testing.assert_array_equal(res.iters, [40, 80, 120, 160, 200])
        assert np.all(res.gaps <= 1e-8 * (1.0 + res.x_norms))

    def test_identity_gap_is_exactly_zero(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        _, _, m = run(obj, StepSchedule.inverse_t(), CompressorSpec.identity(),
                      50, seed=5, checkpoints=10)
        res = replay_virtual(obj, m.replay)
        np.testing.assert_array_equal(res.gaps, np.zeros(5))
        np.testing.assert_array_equal(res.m_final, np.zeros(obj.d))

    def test_replay_final_state_matches_run(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        x, _, m = run(obj, StepSchedule.inverse_t(), CompressorSpec.rand_k(2),
                      60, seed=8)
        res = replay_virtual(obj, m.replay)
        np.testing.assert_array_equal(res.x_final, x)

    def test_tampered_log_raises(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        _, _, m = run(obj, StepSchedule.inverse_t(), CompressorSpec.top_k(1),
                      30, seed=5)
        log = m.replay
        log.samples[3] = (log.samples[3] + 1) % obj.n
        with pytest.raises(RuntimeError, match="different sample"):
            replay_virtual(obj, log)

    def test_inconsistent_boundaries_raise(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        _, _, m = run(obj, StepSchedule.inverse_t(), CompressorSpec.top_k(1),
                      30, seed=5)
        log = m.replay
        log.boundaries[-1] = 29
        with pytest.raises(ValueError, match="boundaries"):
            replay_virtual(obj, log)

    def test_from_state_requires_recording(self, tiny_logistic_obj):
        state = OptimizerState.init(d=tiny_logistic_obj.d)
        with pytest.raises(ValueError):
            ReplayLog.from_state(state, CompressorSpec.top_k(1))

    def test_virtual_gap_paths(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        comp = CompressorSpec.top_k(1)
        state = OptimizerState.init(d=obj.d, seed=6, record_log=True)
        log = ReplayLog.from_state(state, comp)
        log.boundaries = [0]
        assert virtual_gap(state, log, obj) == 0.0
        sched = StepSchedule.inverse_t()
        for _ in range(12):
            step(state, obj, sched, comp)
        full_log = ReplayLog.from_state(state, comp)
        gap = virtual_gap(state, full_log, obj)
        assert gap <= 1e-10 * (1.0 + np.linalg.norm(state.x))
        with pytest.raises(ValueError, match="t="):
            virtual_gap(state, log, obj)


class TestMemoryBound:
    def test_formula(self):
        sched = StepSchedule.theoretical(mu=2.0, a=7.0)
        for t in (0, 3, 50):
            eta = sched.eta(t)
            want = eta * eta * 20.0 * (8 / 2) ** 2 * 1.7
            assert memory_bound(t, sched, 5.0, d=8, k=2, g2=1.7) == pytest.approx(
                want, rel=1e-14)

    def test_identity_margin_equals_bound(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        sched = StepSchedule.theoretical(mu=obj.lam, a=7.0)
        state = OptimizerState.init(d=obj.d, seed=0)
        for _ in range(5):
            step(state, obj, sched, CompressorSpec.identity())
        margin = memory_bound_margin(state, sched, 5.0, obj.d, obj.d, g2=1.0)
        assert margin == memory_bound(5, sched, 5.0, obj.d, obj.d, 1.0)

    def test_margins_vector(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        sched = StepSchedule.theoretical(mu=obj.lam, a=700.0)
        _, _, m = run(obj, sched, CompressorSpec.top_k(1), 40, checkpoints=8)
        g2 = m.summary["g2_max"]
        got = memory_bound_margins(m, sched, 5.0, obj.d, 1, g2)
        want = np.array([memory_bound(int(t), sched, 5.0, obj.d, 1, g2)
                         for t in m.iters]) - m.mem_sq_norm
        np.testing.assert_allclose(got, want, rtol=0, atol=0)
        assert np.all(got > 0)


class TestVarianceProbe:
    def test_single_sample_blowup_exact(self):
        # one example, d=4, k=1: E||d * rand_1(g) - g||^2 = (d-1)||g||^2
        ds = Dataset.from_rows([([0, 1, 2, 3], [1.0, 2.0, 3.0, 4.0])], [1.0], d=4)
        obj = Objective(ds, lam=0.0, kind="quadratic")
        x = np.zeros(4)
        g = full_grad(obj, x)
        assert float(g @ g) > 1.0  # the witness must not be degenerate
        single, batch = variance_probe(obj, x, k=1, exact=True)
        assert single == pytest.approx(3.0 * float(g @ g), rel=1e-12)
        assert batch == pytest.approx(single / 4.0, rel=1e-12)

    def test_k_equals_d_is_plain_sampling_variance(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        x = np.full(obj.d, 0.1)
        full = full_grad(obj, x)
        want = np.mean([
            float(np.sum((stochastic_grad(obj, x, i).gradient - full) ** 2))
            for i in range(obj.n)])
        single, batch = variance_probe(obj, x, k=obj.d, exact=True)
        assert single == pytest.approx(want, rel=1e-12)
        assert batch == pytest.approx(want, rel=1e-12)  # tau = ceil(d/d) = 1

    def test_monte_carlo_batch_below_single(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        x = np.full(obj.d, 0.1)
        rng = np.random.default_rng(17)
        single, batch = variance_probe(obj, x, k=1, trials=300, rng=rng)
        exact_single, _ = variance_probe(obj, x, k=1, exact=True)
        assert batch < single
        assert single == pytest.approx(exact_single, rel=0.3)

    def test_guards(self, tiny_logistic_obj):
        obj = tiny_logistic_obj
        x = np.zeros(obj.d)
        with pytest.raises(ValueError):
            variance_probe(obj, x, k=0, exact=True)
        with pytest.raises(ValueError):
            variance_probe(obj, x, k=obj.d + 1, exact=True)
        with pytest.raises(ValueError):
            variance_probe(obj, x, k=1, batch=0, exact=True)
        with pytest.raises(ValueError):
            variance_probe(obj, x, k=1)  # MC without rng
        big = make_quadratic(d=24, mu=1.0, L=2.0, seed=0)
        with pytest.raises(ValueError, match="too many"):
            variance_probe(Objective.from_problem(big), np.zeros(24), k=12,
                           exact=True)
