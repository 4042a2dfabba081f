"""Compare the compiled GF(2^8) region multiply against the numpy fallback.

Run with ``python benchmarks/bench_gf256.py``.  Each case encodes ``k``
source rows of ``length`` bytes into ``n - k`` parity rows, the shape the
codec uses for one block.
"""

import argparse
import time

import numpy as np

from hamster import _gf256_py
from hamster.gf256 import BACKEND

try:
    from hamster import _gf256 as compiled
except ImportError:
    compiled = None

CASES = [(5, 3, 4096), (9, 5, 65536), (17, 9, 65536), (33, 17, 131072)]


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(7)
    print(f"selected backend: {BACKEND}")
    print(f"{'n':>4} {'k':>4} {'bytes/row':>10} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for n, k, length in CASES:
        coeffs = rng.integers(0, 256, size=(n - k, k), dtype=np.uint8)
        rows = rng.integers(0, 256, size=(k, length), dtype=np.uint8)
        slow = best_of(lambda: _gf256_py.matmul(coeffs, rows), args.repeats)
        if compiled is None:
            print(f"{n:>4} {k:>4} {length:>10} {slow * 1e3:>10.2f} {'n/a':>12} {'n/a':>8}")
            continue
        if not np.array_equal(compiled.matmul(coeffs, rows), _gf256_py.matmul(coeffs, rows)):
            raise SystemExit("backends disagree")
        fast = best_of(lambda: compiled.matmul(coeffs, rows), args.repeats)
        print(f"{n:>4} {k:>4} {length:>10} {slow * 1e3:>10.2f} {fast * 1e3:>12.2f} {slow / fast:>7.1f}x")


if __name__ == "__main__":
    main()
