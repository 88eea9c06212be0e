#!/usr/bin/env python3
"""Benchmark the compiled site-overlap Gram kernel against the numpy fallback.

The kernel computes M[i, j] = prod_n <a[i, n, :], b[j, n, :]> and dominates
every state-norm and overlap computation on multi-term states.  Sizes below
mirror the heavy studies: (terms, cells, d+1) around what the convergence
runs produce.  Prints a Markdown table with timings and speedup.
"""

import argparse
import time

import numpy as np

from toyfock._kernels._gram_np import site_product_gram as gram_numpy

try:
    from toyfock._kernels._gram import site_product_gram as gram_compiled
except ImportError:
    gram_compiled = None

CASES = [
    # (K1, K2, cells, d+1)
    (64, 64, 32, 2),
    (128, 128, 64, 2),
    (256, 256, 128, 2),
    (512, 512, 256, 2),
    (192, 192, 64, 3),
    (1024, 1024, 512, 2),
]


def _bench(fn, a, b, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(a, b)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    rows = ["| K1 | K2 | cells | d+1 | numpy (s) | compiled (s) | speedup |",
            "|---|---|---|---|---|---|---|"]
    for k1, k2, n, c in CASES:
        a = rng.standard_normal((k1, n, c)) + 1j * rng.standard_normal((k1, n, c))
        b = rng.standard_normal((k2, n, c)) + 1j * rng.standard_normal((k2, n, c))
        a, b = np.ascontiguousarray(a), np.ascontiguousarray(b)
        t_np = _bench(gram_numpy, a, b, args.repeats)
        if gram_compiled is not None:
            t_cy = _bench(gram_compiled, a, b, args.repeats)
            gap = np.max(np.abs(gram_compiled(a, b) - gram_numpy(a, b)))
            assert gap <= 1e-9, f"backend mismatch: {gap}"
            rows.append(f"| {k1} | {k2} | {n} | {c} | {t_np:.4f} | {t_cy:.4f} "
                        f"| {t_np / t_cy:.2f}x |")
        else:
            rows.append(f"| {k1} | {k2} | {n} | {c} | {t_np:.4f} | n/a | n/a |")
    print("\n".join(rows))
    if gram_compiled is None:
        print("\ncompiled kernel not built; showing numpy fallback only")


if __name__ == "__main__":
    main()
