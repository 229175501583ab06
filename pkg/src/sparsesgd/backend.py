"""Kernel backend selection.

Two interchangeable kernel sets implement the hot per-step loops: a numba
@njit set (default when numba imports) and a pure-numpy set. Selection order:
an explicit `use()` override, then the SPARSESGD_BACKEND environment variable
("numba" or "numpy"), then auto-detection. Both backends draw from the same
np.random.Generator objects with identical per-step draw order and mirrored
arithmetic, so trajectories agree bitwise; tests assert this.
"""
from __future__ import annotations

import os
from contextlib import contextmanager

_VALID = ("numba", "numpy")
_override: str | None = None


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def backend_name() -> str:
    """Resolve the active backend name without importing kernel modules."""
    if _override is not None:
        return _override
    env = os.environ.get("SPARSESGD_BACKEND", "").strip().lower()
    if env:
        if env not in _VALID:
            raise ValueError(
                f"SPARSESGD_BACKEND must be one of {_VALID}, got {env!r}"
            )
        return env
    return "numba" if _numba_available() else "numpy"


def kernels():
    """Return the active kernel module (imported on first use)."""
    name = backend_name()
    if name == "numba":
        from . import _kernels_nb as mod
    else:
        from . import _kernels_np as mod
    return mod


def use(name: str | None) -> None:
    """Force a backend programmatically (None restores env/auto selection)."""
    global _override
    if name is not None and name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    _override = name


@contextmanager
def forced(name: str):
    """Temporarily force a backend; used by tests and the benchmark."""
    prev = _override
    use(name)
    try:
        yield
    finally:
        use(prev)
