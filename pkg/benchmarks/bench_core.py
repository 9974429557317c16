"""Benchmark the compiled numeric core against the pure-numpy lane.

Times the three hot paths (kernel rho evaluation, kernel weight evaluation,
and the full M-scale bisection) for representative kernels and sample
sizes, and reports the per-call speedup.  Run as:

    python benchmarks/bench_core.py [--sizes 500,2000,10000] [--repeat 30]
"""

import argparse
import time

import numpy as np

from robust_scatter._core import BACKEND, pure
from robust_scatter.elliptical import GeneratingFunction
from robust_scatter.kernels import RockeKernel, SqKernel

try:
    from robust_scatter._core import _speedups
except ImportError:
    _speedups = None


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="500,2000,10000")
    parser.add_argument("--repeat", type=int, default=30)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if _speedups is None:
        print("compiled lane not available; only the pure lane will run")
    print(f"selected backend at import: {BACKEND}")

    gauss = GeneratingFunction("gaussian", p=5)
    laplace = GeneratingFunction("laplace", p=5)
    kernels = [
        ("sq-gaussian", SqKernel(gauss, 0.9)),
        ("sq-laplace", SqKernel(laplace, 0.9)),
        ("rocke", RockeKernel(0.9)),
    ]

    rng = np.random.default_rng(0)
    header = f"{'kernel':<12s} {'n':>6s} {'op':>8s} {'pure (us)':>10s} {'cython (us)':>12s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, kernel in kernels:
        kp = kernel._kp
        for n in sizes:
            d = rng.chisquare(5, size=n) * 1.2
            for op in ("rho", "weight", "m_scale"):
                if op == "rho":
                    t_pure = _time(lambda: pure.rho(d, kp), args.repeat)
                    t_cy = _time(lambda: _speedups.rho(d, kp), args.repeat) if _speedups else float("nan")
                elif op == "weight":
                    t_pure = _time(lambda: pure.weight(d, kp), args.repeat)
                    t_cy = _time(lambda: _speedups.weight(d, kp), args.repeat) if _speedups else float("nan")
                else:
                    t_pure = _time(lambda: pure.m_scale(d, kp, 0.45), args.repeat)
                    t_cy = (
                        _time(lambda: _speedups.m_scale(d, kp, 0.45), args.repeat)
                        if _speedups
                        else float("nan")
                    )
                speedup = t_pure / t_cy if _speedups else float("nan")
                print(
                    f"{name:<12s} {n:>6d} {op:>8s} {t_pure * 1e6:>10.1f} {t_cy * 1e6:>12.1f} {speedup:>8.2f}"
                )
        # correctness spot-check between lanes while we are here
        if _speedups is not None:
            d = rng.chisquare(5, size=1000)
            assert np.allclose(pure.rho(d, kp), _speedups.rho(d, kp), rtol=1e-12, atol=1e-14)
            assert np.allclose(pure.weight(d, kp), _speedups.weight(d, kp), rtol=1e-12, atol=1e-14)


if __name__ == "__main__":
    main()
