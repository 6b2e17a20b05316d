"""Timing comparison of the jit-compiled and pure-python word kernels.

Run as a script:

    python3 benchmarks/bench_kernels.py [--level 3] [--repeats 5]

The two paths are selected the same way the library selects them, so the
numbers reflect what `KCBS_SELFTEST_NO_NUMBA=1` actually costs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from kcbs_selftest import _kernels
from kcbs_selftest.words import encode_words, enumerate_words


def _paths():
    yield "python", _kernels._canon_batch, _kernels._pair_products
    if _kernels.HAVE_NUMBA:
        yield "numba", _kernels._canon_batch_jit, _kernels._pair_products_jit


def bench(level: int, repeats: int) -> None:
    words = enumerate_words(5, level)
    codes, lengths = encode_words(words)
    m = len(words)
    print(f"{m} words at level {level}, {repeats} repeats")

    for name, canon_batch, pair_products in _paths():
        out = np.empty_like(codes)
        out_len = np.empty(m, dtype=np.int64)
        prod = np.full((m * m, 2 * codes.shape[1]), -1, dtype=np.int64)
        prod_len = np.empty(m * m, dtype=np.int64)
        canon_batch(codes, lengths, 5, out, out_len)  # compile before timing
        pair_products(codes, lengths, 5, prod, prod_len)

        best_canon = min(
            _timed(canon_batch, codes, lengths, 5, out, out_len)
            for _ in range(repeats)
        )
        best_pair = min(
            _timed(pair_products, codes, lengths, 5, prod, prod_len)
            for _ in range(repeats)
        )
        print(
            f"  {name:<7} canon_batch {best_canon * 1e3:8.2f} ms"
            f"   pair_products {best_pair * 1e3:8.2f} ms"
        )


def _timed(fn, *args) -> float:
    start = time.perf_counter()
    fn(*args)
    return time.perf_counter() - start


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--level", type=int, default=3)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    bench(args.level, args.repeats)


if __name__ == "__main__":
    main()
