"""Throughput comparison of the compiled and pure-numpy path generators.

Run as ``python3 benchmarks/bench_backends.py``.  Prints, per backend, the
time to evaluate the inverse normal CDF on a large batch and to generate a
block of Brownian paths, plus the max absolute discrepancy between backends.
"""

import time

import numpy as np

from ccemfg import backend
from ccemfg.engine import noise_keys


def _best_of(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    names = backend.available_backends()
    print(f"available backends: {', '.join(names)} "
          f"(active: {backend.active_backend()})")

    p = (np.arange(2_000_000) + 0.5) / 2_000_000
    keys = noise_keys(0, np.arange(2000), np.arange(8))
    steps, horizon = 200, 2.0

    quant = {}
    paths = {}
    for name in names:
        with backend.use_backend(name):
            tq = _best_of(lambda: backend.norm_quantile(p))
            tp = _best_of(lambda: backend.brownian_paths(keys, steps, horizon))
            quant[name] = backend.norm_quantile(p)
            paths[name] = backend.brownian_paths(keys, steps, horizon)
        n_state = keys.size * (steps + 1)
        print(f"{name:>8}: norm_quantile {p.size / tq / 1e6:7.1f} M/s "
              f"({tq * 1e3:6.1f} ms)   "
              f"brownian_paths {n_state / tp / 1e6:7.1f} M states/s "
              f"({tp * 1e3:6.1f} ms)")

    if len(names) == 2:
        a, b = names
        dq = float(np.max(np.abs(quant[a] - quant[b])))
        dp = float(np.max(np.abs(paths[a] - paths[b])))
        print(f"max |{a} - {b}|: norm_quantile {dq:.2e}, "
              f"brownian_paths {dp:.2e}")


if __name__ == "__main__":
    main()
