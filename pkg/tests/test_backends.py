"""Backend selection rules and bitwise agreement between the compiled and
pure-numpy kernel sets."""
import numpy as np
import pytest

from sparsesgd import (AveragingScheme, CompressorSpec, StepSchedule,
                       backend_name, forced, run, run_parallel, use)
from sparsesgd import ParallelConfig
from sparsesgd import backend as _backend


@pytest.fixture(autouse=True)
def restore_override():
    yield
    use(None)


class TestSelection:
    def test_default_is_numba_here(self):
        # the test environment installs numba; auto-detection must find it
        assert backend_name() == "numba"

    def test_use_overrides_and_restores(self):
        use("numpy")
        assert backend_name() == "numpy"
        assert _backend.kernels().__name__.endswith("_kernels_np")
        use(None)
        assert backend_name() == "numba"
        with pytest.raises(ValueError):
            use("cython")

    def test_env_variable(self, monkeypatch):
        monkeypatch.setenv("SPARSESGD_BACKEND", "numpy")
        assert backend_name() == "numpy"
        monkeypatch.setenv("SPARSESGD_BACKEND", "NumPy ")
        assert backend_name() == "numpy"  # trimmed, case-insensitive
        monkeypatch.setenv("SPARSESGD_BACKEND", "fortran")
        with pytest.raises(ValueError, match="SPARSESGD_BACKEND"):
            backend_name()

    def test_use_beats_env(self, monkeypatch):
        monkeypatch.setenv("SPARSESGD_BACKEND", "fortran")
        use("numpy")
        assert backend_name() == "numpy"

    def test_forced_nests_and_restores(self):
        with forced("numpy"):
            assert backend_name() == "numpy"
            with forced("numba"):
                assert backend_name() == "numba"
            assert backend_name() == "numpy"
        assert backend_name() == "numba"


class TestSelectorParity:
    def test_topk(self, rng):
        for _ in range(20):
            v = rng.standard_normal(9)
            with forced("numba"):
                a = _backend.kernels().topk_select(v, 3)
            with forced("numpy"):
                b = _backend.kernels().topk_select(v, 3)
            np.testing.assert_array_equal(a, b)

    def test_randk_randp(self):
        for seed in range(10):
            with forced("numba"):
                a = _backend.kernels().randk_select(9, 3, np.random.default_rng(seed))
                ap = _backend.kernels().randp_select(9, 0.5, np.random.default_rng(seed))
            with forced("numpy"):
                b = _backend.kernels().randk_select(9, 3, np.random.default_rng(seed))
                bp = _backend.kernels().randp_select(9, 0.5, np.random.default_rng(seed))
            np.testing.assert_array_equal(a, b)
            np.testing.assert_array_equal(ap, bp)

    def test_qsgd(self, rng):
        v = rng.standard_normal(7)
        for seed in range(10):
            with forced("numba"):
                ai, av = _backend.kernels().qsgd_quantize(v, 4, np.random.default_rng(seed))
            with forced("numpy"):
                bi, bv = _backend.kernels().qsgd_quantize(v, 4, np.random.default_rng(seed))
            np.testing.assert_array_equal(ai, bi)
            np.testing.assert_array_equal(av, bv)


@pytest.mark.parametrize("comp", [
    CompressorSpec.identity(),
    CompressorSpec.top_k(2),
    CompressorSpec.rand_k(2),
    CompressorSpec.rand_p(0.5),
    CompressorSpec.qsgd(4),
], ids=lambda c: c.label())
def test_run_trajectories_agree_bitwise(tiny_logistic_obj, comp):
    obj = tiny_logistic_obj
    sched = StepSchedule.practical(gamma=1.0, lam=obj.lam, a=5.0)
    avg = AveragingScheme.weighted_quadratic(a=2.0)

    def go():
        return run(obj, sched, comp, 40, averaging=avg, seed=3, checkpoints=10)

    with forced("numba"):
        x_nb, avg_nb, m_nb = go()
    with forced("numpy"):
        x_np, avg_np, m_np = go()
    np.testing.assert_array_equal(x_nb, x_np)
    np.testing.assert_array_equal(avg_nb, avg_np)
    np.testing.assert_array_equal(m_nb.objective, m_np.objective)
    np.testing.assert_array_equal(m_nb.mem_sq_norm, m_np.mem_sq_norm)
    np.testing.assert_array_equal(m_nb.bits_cum, m_np.bits_cum)
    np.testing.assert_array_equal(m_nb.replay.samples, m_np.replay.samples)
    assert m_nb.summary["backend"] == "numba"
    assert m_np.summary["backend"] == "numpy"


def test_parallel_single_worker_agrees_across_backends(tiny_logistic_obj):
    cfg = dict(workers=1, steps_per_worker=60, comp=CompressorSpec.top_k(2),
               base_seed=4, allow_oversubscription=True)
    with forced("numba"):
        a = run_parallel(tiny_logistic_obj, ParallelConfig(**cfg))
    with forced("numpy"):
        b = run_parallel(tiny_logistic_obj, ParallelConfig(**cfg))
    np.testing.assert_array_equal(a.x, b.x)
    assert a.total_writes == b.total_writes
