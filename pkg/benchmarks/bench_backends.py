"""Throughput comparison of the numba and numpy kernel backends.

Runs the same seeded optimizer loop under both backends (trajectories agree
bitwise, so only the wall clock differs) plus a raw top-k selection
microbenchmark, and prints steps/s with the speedup ratio. The numba side is
warmed up first so JIT compilation is not billed to the timed region.

Usage: python3 benchmarks/bench_backends.py [--T 20000] [--repeats 3]
"""
import argparse
import statistics
import time

import numpy as np

from sparsesgd import (CompressorSpec, Objective, StepSchedule, backend,
                       make_synthetic_logistic, run)


def time_run(obj, comp, T: int, repeats: int) -> float:
    """Best-of-repeats seconds for one full run()."""
    best = float("inf")
    for _ in range(repeats):
        tic = time.perf_counter()
        run(obj, StepSchedule.inverse_t(), comp, T, seed=0, checkpoints=[T])
        best = min(best, time.perf_counter() - tic)
    return best


def time_topk(d: int, k: int, calls: int, repeats: int) -> float:
    """Best-of-repeats seconds for `calls` top-k selections at dimension d."""
    mod = backend.kernels()
    x = np.random.default_rng(0).standard_normal(d)
    best = float("inf")
    for _ in range(repeats):
        tic = time.perf_counter()
        for _ in range(calls):
            mod.topk_select(x, k)
        best = min(best, time.perf_counter() - tic)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=20_000, help="steps per run")
    ap.add_argument("--n", type=int, default=2_000, help="dataset size")
    ap.add_argument("--d", type=int, default=200, help="dimension")
    ap.add_argument("--k", type=int, default=2, help="coordinates kept")
    ap.add_argument("--repeats", type=int, default=3, help="best-of repeats")
    args = ap.parse_args()

    prob = make_synthetic_logistic(n=args.n, d=args.d, seed=0,
                                   solve_optimum=False)
    obj = Objective.from_problem(prob)
    comp = CompressorSpec.top_k(args.k)

    with backend.forced("numba"):
        backend.kernels().warmup()

    results: dict[str, dict[str, float]] = {}
    for name in ("numpy", "numba"):
        with backend.forced(name):
            loop = time_run(obj, comp, args.T, args.repeats)
            sel = time_topk(args.d, args.k, 10_000, args.repeats)
        results[name] = {"steps_per_s": args.T / loop,
                         "topk_per_s": 10_000 / sel}

    print(f"logistic n={args.n} d={args.d} top_{args.k}, T={args.T}, "
          f"best of {args.repeats}")
    print(f"{'backend':<8} {'run steps/s':>14} {'topk calls/s':>14}")
    for name in ("numpy", "numba"):
        r = results[name]
        print(f"{name:<8} {r['steps_per_s']:>14,.0f} {r['topk_per_s']:>14,.0f}")
    for metric in ("steps_per_s", "topk_per_s"):
        ratio = results["numba"][metric] / results["numpy"][metric]
        print(f"numba/numpy {metric}: {ratio:.2f}x")


if __name__ == "__main__":
    main()
