#!/usr/bin/env python3
"""Benchmark the compiled DTW kernel against the numpy fallback.

Usage: python benchmarks/bench_dtw.py [n_pairs]

Reports per-pair timings on velocity-profile-sized inputs and verifies the
two kernels return identical distances.
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from penlive import _dtw_py  # noqa: E402
from penlive import dtw as dtw_mod  # noqa: E402


def bench(kernel, pairs, band=-1):
    start = time.perf_counter()
    out = [kernel(a, b, band, np.inf) for a, b in pairs]
    return time.perf_counter() - start, out


def main():
    n_pairs = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    rng = np.random.default_rng(0)
    sizes = [(60, 60), (120, 110), (400, 380)]
    print(f"active backend: {dtw_mod.BACKEND}")
    header = f"{'size':>12} {'numpy ms/pair':>14} {'cython ms/pair':>15} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n, m in sizes:
        pairs = [(rng.random(n), rng.random(m)) for _ in range(n_pairs)]
        t_py, out_py = bench(_dtw_py.dtw, pairs)
        if dtw_mod.BACKEND == "cython":
            t_cy, out_cy = bench(dtw_mod._kernel.dtw, pairs)
            assert out_py == out_cy, "kernels disagree"
            print(f"{n}x{m:>7} {1e3 * t_py / n_pairs:14.3f} "
                  f"{1e3 * t_cy / n_pairs:15.3f} {t_py / t_cy:8.1f}x")
        else:
            print(f"{n}x{m:>7} {1e3 * t_py / n_pairs:14.3f} {'(not built)':>15} {'':>8}")


if __name__ == "__main__":
    main()
