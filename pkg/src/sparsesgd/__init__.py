"""Sparsified SGD with error feedback.

Compressed stochastic gradient steps keep whatever the compressor dropped
in a memory vector and re-inject it later, which restores the convergence
rate of uncompressed SGD while sending only k of d coordinates per step.
The package provides the compressors (top_k, rand_k, rand_p, qsgd,
identity), the sequential and lock-free parallel loops, stepsize and
averaging schedules, communication-cost accounting, and runtime
diagnostics (virtual-sequence replay, memory-norm bound, variance probe).

Hot loops run as numba kernels when numba is importable; set
SPARSESGD_BACKEND=numpy (or numba) to force a backend. Both produce
bit-identical trajectories.
"""
from .backend import backend_name, forced, use
from .checks import run_checks
from .comm import (CostModel, bits_dense, bits_qsgd, bits_qsgd_sparse_aware,
                   bits_sparse, ceil_log2, track)
from .compression import (CompressorSpec, SparseUpdate, compress,
                          contraction_estimate, contraction_exact, identity,
                          qsgd, rand_k, rand_p, top_k)
from .data import (Dataset, LibsvmParseError, SyntheticProblem,
                   make_quadratic, make_ridge_quadratic,
                   make_synthetic_logistic, parse_libsvm,
                   to_libsvm)
from .metrics import RunMetrics
from .objective import (GradientSample, Objective, full_grad, full_value,
                        grad_norm_bound_estimate, smoothness_bound,
                        stochastic_grad)
from .optimizer import (AveragingScheme, OptimizerState, ReplayLog,
                        ReplayResult, StepSchedule, memory_bound,
                        memory_bound_constant, memory_bound_margin,
                        memory_bound_margins, replay_virtual, run,
                        shift_admissible, shift_for, step, variance_probe,
                        virtual_gap, weight_sum_closed_form)
from .parallel import (ParallelConfig, ParallelResult, run_parallel,
                       staleness_probe)

__version__ = "0.1.0"

__all__ = [
    "AveragingScheme", "CompressorSpec", "CostModel", "Dataset",
    "GradientSample", "LibsvmParseError", "Objective", "OptimizerState",
    "ParallelConfig", "ParallelResult", "ReplayLog", "ReplayResult",
    "RunMetrics", "SparseUpdate", "StepSchedule", "SyntheticProblem",
    "backend_name", "bits_dense", "bits_qsgd", "bits_qsgd_sparse_aware",
    "bits_sparse", "ceil_log2", "compress", "contraction_estimate",
    "contraction_exact", "forced", "full_grad", "full_value",
    "grad_norm_bound_estimate", "identity", "make_quadratic",
    "make_ridge_quadratic", "make_synthetic_logistic", "memory_bound",
    "memory_bound_constant", "memory_bound_margin", "memory_bound_margins",
    "parse_libsvm", "qsgd",
    "rand_k", "rand_p", "replay_virtual", "run", "run_checks",
    "run_parallel", "shift_admissible", "shift_for", "smoothness_bound",
    "staleness_probe", "step", "stochastic_grad", "to_libsvm", "top_k",
    "track", "use", "variance_probe", "virtual_gap",
    "weight_sum_closed_form",
]
