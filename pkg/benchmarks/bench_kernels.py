"""Numba vs numpy timings for the grid kernels.

    python benchmarks/bench_kernels.py [--n 513] [--repeat 5]

Both code paths are called directly, so the PF_USE_NUMBA flag does not
matter here. The first numba call is excluded (compilation).
"""

import argparse
import functools
import time

import numpy as np

from phasefield import kernels
from phasefield._accel import HAVE_NUMBA


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=513)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    n = args.n
    h = 2.0 / (n - 1)
    x = np.linspace(-1.0, 1.0, n)
    X, Y = np.meshgrid(x, x)
    u = np.tanh((np.hypot(X, Y) - 0.5) / (np.sqrt(2.0) * 0.05))
    eps, dt = 0.05, 0.4 * h * h

    cases = {
        "laplacian": lambda m: m(u, h, h, False),
        "hessian": lambda m: m(u, h, h, False),
        "gradient": lambda m: m(u, h, h, False),
        "grad_sq": lambda m: m(u, h, h, False),
        "ac_steps": lambda m: m(u, h, h, False, True, eps, dt, args.steps),
        "marching_squares": lambda m: m(u, 0.0),
    }
    print(f"grid {n}x{n}, best of {args.repeat}")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call in cases.items():
        f_np = getattr(kernels, f"{name}_np")
        f_nb = getattr(kernels, f"{name}_nb")
        call(f_nb)  # compile
        t_np = best_of(functools.partial(call, f_np), args.repeat)
        t_nb = best_of(functools.partial(call, f_nb), args.repeat)
        print(f"{name:<18}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}x")


if __name__ == "__main__":
    main()
