"""Compare the numba and pure-numpy flavours of the hot kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N] [--large]

Each kernel is run once to trigger compilation, then timed ``--repeat``
times; the best time is reported together with the max difference between
flavours.  With SHSG_DISABLE_NUMBA=1 the jit column times the plain Python
loops, which is slow but still valid.
"""

import argparse
import time

import numpy as np

from shsg import kernels
from shsg._accel import USE_NUMBA
from shsg.sht import _theta_integral_matrix


def best_of(fn, args, repeat):
    out = fn(*args)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(large):
    rng = np.random.default_rng(0)
    Q = 144 if large else 48
    n = 4 if large else 8
    table = kernels._wigner_quarter_np(Q)
    W = rng.standard_normal((n, Q, 2 * Q - 1)) + 1j * rng.standard_normal((n, Q, 2 * Q - 1))
    W = np.ascontiguousarray(W @ _theta_integral_matrix(Q))
    S = rng.standard_normal((n, Q, Q)) + 1j * rng.standard_normal((n, Q, Q))
    x = rng.standard_normal(400)
    rho = np.linspace(0, 1, 101)
    y = 2.0 * rng.standard_normal(200_000)
    curves = rng.standard_normal((256, 7, 200))
    return [
        ("wigner_quarter", kernels._wigner_quarter_jit, kernels._wigner_quarter_np, (Q,)),
        ("sht_analysis", kernels._sht_analysis_jit, kernels._sht_analysis_np, (W, table, Q)),
        ("sht_synthesis", kernels._sht_synthesis_jit, kernels._sht_synthesis_np, (S, table, Q)),
        ("lag_recursion", kernels._lag_recursion_jit, kernels._lag_recursion_np, (x, rho)),
        ("tgh_inverse", kernels._tgh_inverse_jit, kernels._tgh_inverse_np, (y, 0.2, 0.1)),
        ("band_depth", kernels._mbd_jit, kernels._mbd_np, (curves,)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--large", action="store_true", help="use Q=144 transform sizes")
    args = ap.parse_args()
    print(f"numba active: {USE_NUMBA}")
    print(f"{'kernel':<16}{'jit [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}{'max diff':>12}")
    for name, fj, fn, a in cases(args.large):
        tj, oj = best_of(fj, a, args.repeat)
        tn, on = best_of(fn, a, args.repeat)
        diff = float(np.max(np.abs(np.asarray(oj) - np.asarray(on))))
        print(f"{name:<16}{1e3 * tj:>12.3f}{1e3 * tn:>12.3f}{tn / tj:>10.2f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
