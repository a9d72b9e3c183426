"""Compare the compiled kernel backend against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 1024,65536,1048576]
Prints a table of median wall times and the speedup ratio per kernel.
"""

import argparse
import time

import numpy as np

from bootdiff.neural import _pykernels, kernels


def _median_time(fn, reps=7):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def bench(size: int, rng: np.random.Generator):
    z = np.ascontiguousarray(rng.standard_normal(size))
    da = np.ascontiguousarray(rng.standard_normal(size))
    p = rng.standard_normal(size)
    g = rng.standard_normal(size)
    m = np.zeros(size)
    v = np.zeros(size)

    cases = {
        "silu_fwd": (lambda k: k.silu_fwd(z)),
        "silu_bwd": (lambda k: k.silu_bwd(z, da)),
        "relu_fwd": (lambda k: k.relu_fwd(z)),
        "relu_bwd": (lambda k: k.relu_bwd(z, da)),
        "clamp_fwd": (lambda k: k.clamp_fwd(z, 1.0)),
        "clamp_bwd": (lambda k: k.clamp_bwd(z, 1.0, da)),
        "adam_step": (lambda k: k.adam_step(p, g, m, v, 1, 1e-3, 0.9,
                                            0.999, 1e-8)),
    }
    rows = []
    for name, call in cases.items():
        t_py = _median_time(lambda: call(_pykernels))
        if kernels.compiled_impl is not None:
            t_c = _median_time(lambda: call(kernels.compiled_impl))
            rows.append((name, t_py, t_c, t_py / t_c))
        else:
            rows.append((name, t_py, float("nan"), float("nan")))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="1024,65536,1048576")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(0)
    backend = ("compiled (" + kernels.compiled_impl.BACKEND + ")"
               if kernels.compiled_impl is not None
               else "numpy fallback only")
    print(f"active backend: {kernels.BACKEND}; comparing against: {backend}")
    for size in sizes:
        print(f"\nn = {size}")
        print(f"{'kernel':>10} {'numpy (us)':>12} {'compiled (us)':>14} "
              f"{'speedup':>8}")
        for name, t_py, t_c, ratio in bench(size, rng):
            print(f"{name:>10} {t_py * 1e6:>12.1f} {t_c * 1e6:>14.1f} "
                  f"{ratio:>8.2f}")


if __name__ == "__main__":
    main()
