"""Compare the compiled and numpy backends of the hot kernels.

Usage: python benchmarks/bench_kernels.py [--n 131072] [--bins 16] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from ldpgof import _accel
from ldpgof.harness import experiment as ex
from ldpgof.tuning import TestConfig


def bench_column_moments(backend, n, N, repeat):
    g = np.random.default_rng(0)
    bins = g.integers(-1, N, size=n)
    hits = g.random(n)
    center = np.ones(N)

    def run():
        _accel.column_moments(np.random.default_rng(1), bins, hits, 3.0, center, backend=backend)

    best = min(timeit.repeat(run, number=1, repeat=repeat))
    return best, best / (n * N) * 1e9


def bench_trial(mechanism, n, repeat):
    cfg = TestConfig(n=n, alpha=0.5, mechanism=mechanism)
    spec = ex.ExperimentSpec(cfg, "uniform:0,1")
    ctx = ex.Context.prepare(spec)
    return min(timeit.repeat(lambda: ex.run_trial(spec, 0, ctx), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2 ** 17)
    ap.add_argument("--bins", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    backends = ["python"] + (["cython"] if _accel.BACKEND == "cython" else [])
    print(f"column_moments, n={a.n}, N={a.bins} (best of {a.repeat})")
    base = None
    for b in backends:
        t, per = bench_column_moments(b, a.n, a.bins, a.repeat)
        base = base or t
        print(f"  {b:>7}: {t * 1e3:8.2f} ms  {per:6.2f} ns/entry  speedup {base / t:4.2f}x")
    if _accel.BACKEND != "cython":
        print("  compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"full trial with the active backend ({_accel.BACKEND}), n={a.n}")
    for m in ("ni", "interactive"):
        print(f"  {m:>11}: {bench_trial(m, a.n, a.repeat) * 1e3:8.2f} ms")


if __name__ == "__main__":
    main()
