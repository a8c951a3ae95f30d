"""Benchmark the numba-jitted kernels against their pure-Python originals.

Usage:
    python benchmarks/bench_kernels.py [n_slots]

Both paths run the same source, so results are bit-identical; only speed
differs. Set LWFSMC_NO_NUMBA=1 before importing lwfsmc to force the plain
path package-wide (then jitted timings are skipped here).
"""

import sys
import time

import numpy as np

from lwfsmc import _kernels as K


def timeit(fn, *args, repeat=5):
    fn(*args)  # warmup (includes JIT compile for the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(n=500_000):
    rng = np.random.default_rng(0)
    n_states, n_intervals = 4, 12
    p = rng.dirichlet(np.ones(n_states), size=(n_intervals, n_states))
    cum_rows = np.cumsum(p, axis=2)
    thresholds = np.sort(rng.uniform(30, 50, (n_intervals, n_states + 1)), axis=1)
    reps = (thresholds[:, :-1] + thresholds[:, 1:]) / 2
    interval_idx = np.sort(rng.integers(0, n_intervals, n)).astype(np.int64)
    e = rng.standard_normal(n)
    u1, u2 = rng.random(n), rng.random(n)
    cum_init = np.cumsum(rng.dirichlet(np.ones(n_states)))
    states = rng.integers(0, n_states, n).astype(np.int64)

    cases = [
        ("ar1_path", K.ar1_path, K.ar1_path_py, (e, 0.95)),
        ("markov_path", K.markov_path, K.markov_path_py, (cum_rows[0], 1, u1)),
        ("count_pairs", K.count_pairs, K.count_pairs_py, (states, n_states)),
        ("fsmc_walk", K.fsmc_walk, K.fsmc_walk_py,
         (interval_idx, cum_init, cum_rows, thresholds, reps, u1, u2, True)),
    ]

    print(f"n = {n:,} slots | numba enabled: {K.NUMBA_ENABLED}")
    print(f"{'kernel':<12} {'python':>12} {'numba':>12} {'speedup':>9}  identical")
    for name, fast, plain, args in cases:
        t_py, out_py = timeit(plain, *args)
        if K.NUMBA_ENABLED:
            t_nb, out_nb = timeit(fast, *args)
            same = all(np.array_equal(a, b) for a, b in
                       zip(np.atleast_1d(out_py) if not isinstance(out_py, tuple) else out_py,
                           np.atleast_1d(out_nb) if not isinstance(out_nb, tuple) else out_nb))
            print(f"{name:<12} {t_py * 1e3:>10.1f}ms {t_nb * 1e3:>10.1f}ms "
                  f"{t_py / t_nb:>8.1f}x  {same}")
        else:
            print(f"{name:<12} {t_py * 1e3:>10.1f}ms {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 500_000)
