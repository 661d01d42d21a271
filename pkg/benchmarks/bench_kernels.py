"""Time the compiled kernels against the NumPy fallback on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from robustl1._linalg import RANK_RTOL
from robustl1.kernels import backend_module

CASES = [
    ("max_hyperplane_count 4x40", lambda k, X: k.max_hyperplane_count(X, RANK_RTOL), (4, 40)),
    ("first_deficient_subset 3x16 m=3", lambda k, X: k.first_deficient_subset(X, 3, RANK_RTOL), (3, 16)),
    ("v1_max 3x14 k=7", lambda k, X: k.v1_max(X, 7, RANK_RTOL), (3, 14)),
    ("error_constants 3x13", lambda k, X: k.error_constants(X, 3, RANK_RTOL), (3, 13)),
]


def agree(a, b):
    if isinstance(a, tuple) and len(a) == 3 and isinstance(a[0], float):
        return np.allclose(a[:2], b[:2], rtol=1e-8) and a[2] == b[2]
    if a is None or isinstance(a, tuple):
        return a == b
    return bool(np.isclose(a, b, rtol=1e-8))


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    py = backend_module("python")
    try:
        cy = backend_module("compiled")
    except ImportError:
        print("compiled extension not built; only the fallback is available")
        return
    print(f"{'kernel':36s} {'numpy [s]':>10s} {'compiled [s]':>13s} {'speedup':>8s}")
    for name, call, shape in CASES:
        X = rng.standard_normal(shape)
        tp, outp = best_time(lambda: call(py, X), args.repeat)
        tc, outc = best_time(lambda: call(cy, X), args.repeat)
        same = agree(outp, outc)
        print(f"{name:36s} {tp:10.4f} {tc:13.4f} {tp / tc:8.1f}x{'' if same else '  MISMATCH'}")


if __name__ == "__main__":
    main()
