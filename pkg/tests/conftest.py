"""Shared fixtures; the numba kernels compile once per session up front so
individual tests (and the timed acceptance criteria) measure compute, not JIT."""
import numpy as np
import pytest

from sparsesgd import Objective, backend, make_synthetic_logistic


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    kernels = backend.kernels()
    warm = getattr(kernels, "warmup", None)
    if warm is not None:
        warm()


@pytest.fixture(scope="session")
def tiny_logistic():
    """12 x 6 logistic problem with a solved optimum; read-only."""
    return make_synthetic_logistic(n=12, d=6, seed=3)


@pytest.fixture(scope="session")
def tiny_logistic_obj(tiny_logistic):
    return Objective.from_problem(tiny_logistic)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
