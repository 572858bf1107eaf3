"""Compiled vs pure-Python kernels: wall time per call and speedup.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import math
import time

import numpy as np

from rwde._backend import kernels_c, kernels_py
from rwde._philox import replica_seeds
from rwde.dirichlet import Weights
from rwde.walk import default_window

CANONICAL = (1.3, 0.05, 0.05, 0.05, 0.05, 0.05)


def cases():
    es, ws = replica_seeds(1, 0)
    coords = np.array([[i, -i, 2 * i] for i in range(2000)], dtype=np.int64)
    levels = np.cumsum(np.random.default_rng(0).normal(0.3, 1.0, 20000))
    a = 2 * math.sqrt(3) + 0.1
    window = default_window(Weights(CANONICAL), a)
    return {
        "env_batch (2000 vertices)": lambda k: k.env_batch(es, coords, CANONICAL),
        "walk_uniforms (20000)": lambda k: k.walk_uniforms(ws, 0, 20000),
        "find_renewals (20000 levels)": lambda k: k.find_renewals(levels, a, 200, 10),
        "walk (20000 steps)": lambda k: k.walk(es, ws, CANONICAL, (0, 0, 0), 20000, (1.0, 0.0, 0.0),
                                               a, window, 0),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels_c is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<30}{'cython (s)':>12}{'python (s)':>12}{'speedup':>10}")
    for name, fn in cases().items():
        tc = best_of(lambda: fn(kernels_c), args.repeat)
        tp = best_of(lambda: fn(kernels_py), args.repeat)
        print(f"{name:<30}{tc:>12.5f}{tp:>12.5f}{tp / tc:>9.0f}x")


if __name__ == "__main__":
    main()
