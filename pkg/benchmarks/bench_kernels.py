"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 256] [--repeat 5]

Prints one line per kernel with both timings and the speed-up, and checks
the largest difference between the two backends (complex rounding in
the phase integration can differ in the last bit).
"""
import argparse
import time

import numpy as np

from qhydro import _kernels_py

try:
    from qhydro import _kernels
except ImportError:
    _kernels = None


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _cases(n):
    x = np.linspace(-np.pi, np.pi, n, endpoint=False)
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = np.sin(X) * np.cos(2 * Y) + 0.3 * np.cos(X + Y)
    g = np.cos(X) + 0.5 * np.sin(3 * Y)
    psi = np.exp(-(X ** 2 + Y ** 2) / 4 + 1j * (X + 0.5 * np.sin(Y)))
    grad = np.ones_like(X)
    mask = np.abs(psi) ** 2 > 1e-6
    h = x[1] - x[0]

    def lines(k):
        return lambda: k.integrate_lines(psi, grad, mask, h, n // 2, np.zeros(n))

    def squares(k):
        return lambda: k.marching_squares(f, 0.1)

    def crossings(k):
        sa, ca, _ = k.marching_squares(f, 0.1)
        sb, cb, _ = k.marching_squares(g, 0.2)
        return lambda: k.segment_crossings(sa, ca, sb, cb)

    return {"integrate_lines": lines, "marching_squares": squares, "segment_crossings": crossings}


def _max_diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    diffs = [np.nanmax(np.abs(np.asarray(x, float) - np.asarray(y, float)), initial=0.0) for x, y in zip(a, b)]
    return max(diffs)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=256, help="grid points per axis")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':20s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speed-up':>9s}  max diff")
    for name, make in _cases(args.n).items():
        t_py, out_py = _best(make(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:20s} {1e3 * t_py:12.2f} {'-':>14s} {'-':>9s}  -")
            continue
        t_c, out_c = _best(make(_kernels), args.repeat)
        print(f"{name:20s} {1e3 * t_py:12.2f} {1e3 * t_c:14.2f} {t_py / t_c:8.1f}x  {_max_diff(out_py, out_c):.1e}")


if __name__ == "__main__":
    main()
