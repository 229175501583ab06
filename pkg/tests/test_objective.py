"""Objective values and gradient oracles against brute-force references."""
import numpy as np
import pytest

from sparsesgd import (Objective, full_grad, full_value,
                       grad_norm_bound_estimate, make_quadratic,
                       make_synthetic_logistic, smoothness_bound,
                       stochastic_grad)


def _brute_value(obj, x):
    A = obj.dataset.to_dense()
    y = obj.dataset.labels
    m = A @ x
    if obj.kind == "logistic":
        data = np.log1p(np.exp(-y * m)).mean()
    else:
        data = 0.5 * ((m - y) ** 2).mean()
    return data + 0.5 * obj.lam * x @ x


def _brute_grad_i(obj, x, i):
    a = obj.dataset.to_dense()[i]
    y = obj.dataset.labels[i]
    m = a @ x
    if obj.kind == "logistic":
        c = -y / (1.0 + np.exp(y * m))
    else:
        c = m - y
    return c * a + obj.lam * x


@pytest.fixture(params=["logistic", "quadratic"])
def problem(request):
    if request.param == "logistic":
        return make_synthetic_logistic(n=9, d=5, density=0.7, seed=21,
                                       solve_optimum=False)
    return make_quadratic(d=5, mu=0.5, L=2.0, seed=21, noise_std=0.3)


@pytest.fixture()
def obj(problem):
    return Objective.from_problem(problem)


def test_construction_guards(tiny_logistic):
    ds = tiny_logistic.dataset
    with pytest.raises(ValueError):
        Objective(ds, lam=0.1, kind="hinge")
    with pytest.raises(ValueError):
        Objective(ds, lam=-0.1)
    o = Objective(ds, lam=0.1, kind="quadratic")
    assert (o.n, o.d) == (ds.n, ds.d)


def test_full_value_matches_brute_force(obj, rng):
    for _ in range(5):
        x = rng.standard_normal(obj.d)
        assert full_value(obj, x) == pytest.approx(_brute_value(obj, x), rel=1e-12)
    with pytest.raises(ValueError):
        full_value(obj, np.zeros(obj.d + 1))


def test_full_value_stable_for_huge_margins(tiny_logistic_obj):
    x = np.full(tiny_logistic_obj.d, 1e4)
    v = full_value(tiny_logistic_obj, x)
    assert np.isfinite(v)


def test_stochastic_grad_matches_brute_force(obj, rng):
    x = rng.standard_normal(obj.d)
    for i in range(obj.n):
        g = stochastic_grad(obj, x, i)
        assert g.index == i
        np.testing.assert_allclose(g.gradient, _brute_grad_i(obj, x, i),
                                   rtol=1e-12, atol=1e-12)


def test_stochastic_grad_sampling_and_errors(obj, rng):
    x = np.zeros(obj.d)
    with pytest.raises(ValueError):
        stochastic_grad(obj, x)  # neither i nor rng
    with pytest.raises(IndexError):
        stochastic_grad(obj, x, obj.n)
    with pytest.raises(IndexError):
        stochastic_grad(obj, x, -1)
    # rng-drawn index matches an explicit redraw from the same state
    g1 = stochastic_grad(obj, x, rng=np.random.default_rng(7))
    want = int(np.random.default_rng(7).integers(0, obj.n))
    assert g1.index == want


def test_full_grad_is_mean_of_sample_grads(obj, rng):
    x = rng.standard_normal(obj.d)
    mean = np.mean([stochastic_grad(obj, x, i).gradient for i in range(obj.n)],
                   axis=0)
    np.testing.assert_allclose(full_grad(obj, x), mean, rtol=1e-12, atol=1e-12)


def test_full_grad_matches_finite_differences(obj, rng):
    x = rng.standard_normal(obj.d)
    g = full_grad(obj, x)
    h = 1e-6
    for j in range(obj.d):
        e = np.zeros(obj.d)
        e[j] = h
        fd = (full_value(obj, x + e) - full_value(obj, x - e)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_grad_norm_bound_matches_brute_force(obj, rng):
    pts = [rng.standard_normal(obj.d) for _ in range(4)]
    brute = max(
        np.mean([float(_brute_grad_i(obj, x, i) @ _brute_grad_i(obj, x, i))
                 for i in range(obj.n)])
        for x in pts
    )
    assert grad_norm_bound_estimate(obj, pts) == pytest.approx(brute, rel=1e-10)
    with pytest.raises(ValueError):
        grad_norm_bound_estimate(obj, [])


def test_smoothness_bound_dominates_sample_hessians(obj, rng):
    # each f_i has curvature <= coef'(margin) ||a_i||^2 + lam; the bound must
    # cover a numerically estimated directional second derivative
    bound = smoothness_bound(obj)
    x = rng.standard_normal(obj.d)
    v = rng.standard_normal(obj.d)
    v /= np.linalg.norm(v)
    h = 1e-4
    for i in range(obj.n):
        second = (
            _brute_grad_i(obj, x + h * v, i) - _brute_grad_i(obj, x - h * v, i)
        ) @ v / (2 * h)
        assert second <= bound + 1e-6


def test_smoothness_bound_values(tiny_logistic_obj):
    # unit-norm rows: logistic curvature tops out at 1/4
    assert smoothness_bound(tiny_logistic_obj) == pytest.approx(
        0.25 + tiny_logistic_obj.lam)
