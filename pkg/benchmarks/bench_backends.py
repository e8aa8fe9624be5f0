"""Time the numba and numpy kernel backends on sphere node sets.

Usage: python3 benchmarks/bench_backends.py [--sizes 500,1000,2000,4000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from chargedrop import _backend
from chargedrop.measure import fibonacci_sphere


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="500,1000,2000,4000")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    impls = [_backend.numpy_impl]
    if _backend.numba_impl is None:
        print("numba backend unavailable; timing numpy only")
    else:
        impls.append(_backend.numba_impl)
    print(f"{'op':<14}{'N':>7}" + "".join(f"{impl.name:>12}" for impl in impls) + f"{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        X = fibonacci_sphere(n)
        A = np.full(n, 4 * np.pi / n)
        w = np.full(n, 1.0 / n)
        labels = np.zeros(n, dtype=np.int64)
        rho = 2.0 * np.sqrt(A)
        K = _backend.numpy_impl.pair_matrix(X, 1.0, False)[0]
        ops = {
            "pair_matrix": lambda impl: impl.pair_matrix(X, 1.0, False),
            "potential": lambda impl: impl.potential(X[: n // 2] * 1.5, X, w, 1.0, False),
            "quad_form": lambda impl: impl.quad_form(K, w),
            "neighbor_sums": lambda impl: impl.neighbor_sums(X, A, labels, rho, 1.0, False),
        }
        for name, op in ops.items():
            for impl in impls:
                op(impl)  # warm-up, includes numba compilation
            t = [best_of(lambda: op(impl), args.repeat) for impl in impls]
            speed = f"{t[0] / t[-1]:>9.1f}x" if len(t) > 1 else ""
            print(f"{name:<14}{n:>7}" + "".join(f"{x * 1e3:>10.2f}ms" for x in t) + speed)


if __name__ == "__main__":
    main()
