"""Benchmark the compiled geometry kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from spotfill.kernels import _numpy

try:
    from spotfill.kernels import _native
except ImportError:
    _native = None


def timeit(fn, repeat):
    fn()  # warm up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = []
    for n, m in ((512, 512), (2048, 2048)):
        a = rng.uniform(-1, 1, (n, 3))
        b = rng.uniform(-1, 1, (m, 3))
        cases.append((f"nearest_neighbors {n}x{m}",
                      lambda a=a, b=b: _numpy.nearest_neighbors(a, b),
                      (lambda a=a, b=b: _native.nearest_neighbors(a, b)) if _native else None))
    for n, count in ((2048, 512), (4096, 1024)):
        pts = rng.uniform(-1, 1, (n, 3))
        cases.append((f"farthest_point_sample {n}->{count}",
                      lambda p=pts, c=count: _numpy.farthest_point_sample(p, c),
                      (lambda p=pts, c=count: _native.farthest_point_sample(p, c)) if _native else None))
    for nq, ns, s in ((128, 512, 16), (512, 2048, 48)):
        q = rng.uniform(-1, 1, (nq, 3))
        src = rng.uniform(-1, 1, (ns, 3))
        cases.append((f"ball_query {nq}q/{ns}s S={s}",
                      lambda q=q, s_=src, k=s: _numpy.ball_query(q, s_, 0.2, k),
                      (lambda q=q, s_=src, k=s: _native.ball_query(q, s_, 0.2, k)) if _native else None))

    print(f"{'kernel':<36} {'numpy':>10} {'native':>10} {'speedup':>8}")
    for name, np_fn, nt_fn in cases:
        t_np = timeit(np_fn, args.repeat)
        if nt_fn is None:
            print(f"{name:<36} {t_np * 1e3:9.2f}ms {'n/a':>10} {'':>8}")
            continue
        t_nt = timeit(nt_fn, args.repeat)
        print(f"{name:<36} {t_np * 1e3:9.2f}ms {t_nt * 1e3:9.2f}ms {t_np / t_nt:7.1f}x")
    if _native is None:
        print("\ncompiled backend not built; only the fallback was timed")


if __name__ == "__main__":
    main()
