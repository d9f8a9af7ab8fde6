#!/usr/bin/env python3
"""Benchmark the hot kernels: numba-compiled vs pure numpy/python fallback.

The same comparison is what GAMMASEG_NUMBA=0 switches at import time; here
both variants run in one process.  Usage:

    python benchmarks/bench_kernels.py [--sizes 256,512,1024]
"""

import argparse
import time

import numpy as np

from gammaseg import _accel


def timed(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_edt(side):
    rng = np.random.default_rng(0)
    seeds = rng.random((side, side)) < 0.01
    seeds[side // 2, side // 2] = True
    sx = sy = 1.0 / side
    if _accel.USE_NUMBA:
        _accel.edt_sq(seeds, sx, sy)  # compile before timing
        t_fast, d_fast = timed(_accel._edt_core_jit, seeds, sx, sy)
    else:
        t_fast, d_fast = timed(_accel._edt_core, seeds, sx, sy)
    t_np, d_np = timed(_accel.edt_sq_numpy, seeds, sx, sy)
    assert np.allclose(d_fast, d_np)
    return t_fast, t_np


def bench_transport(n):
    rng = np.random.default_rng(1)
    pts_a = rng.random((n, 2))
    pts_b = rng.random((n, 2))
    a = rng.random(n) + 0.5
    a /= a.sum()
    b = rng.random(n) + 0.5
    b /= b.sum()
    C = np.sum((pts_a[:, None, :] - pts_b[None, :, :]) ** 2, axis=2)
    _accel.network_simplex(a, b, C)  # compile before timing
    t_fast, fast = timed(_accel.network_simplex, a, b, C, repeat=2)
    t_py, py = timed(_accel.network_simplex_python, a, b, C, repeat=1)
    assert abs(fast[3] - py[3]) <= 1e-9 * max(1.0, abs(fast[3]))
    return t_fast, t_py


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="256,512,1024", help="comma list of sizes")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    label = "numba" if _accel.USE_NUMBA else "python(loops)"
    print(f"compiled path: {label}   fallback: numpy/python")
    print()
    print("euclidean distance transform (side x side grid)")
    print(f"{'side':>6} {'compiled':>12} {'numpy':>12} {'speedup':>9}")
    for side in sizes:
        t_fast, t_np = bench_edt(side)
        print(f"{side:>6} {t_fast:>11.4f}s {t_np:>11.4f}s {t_np / t_fast:>8.1f}x")
    print()
    print("exact transport (n x n dense network simplex)")
    print(f"{'n':>6} {'compiled':>12} {'python':>12} {'speedup':>9}")
    for n in sizes:
        t_fast, t_py = bench_transport(n)
        print(f"{n:>6} {t_fast:>11.4f}s {t_py:>11.4f}s {t_py / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()
