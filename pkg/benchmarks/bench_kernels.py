"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 5]

Both backends return bit-identical results (asserted here on every case);
this script only measures speed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pairbox._kernels import _python

try:
    from pairbox._kernels import _native
except ImportError:
    _native = None


def random_boxes(rng, n):
    out = rng.uniform(0, 600, size=(n, 4))
    out[:, 2:] = rng.uniform(5, 80, size=(n, 2))
    return out


def best_of(fn, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _native is None:
        print("compiled kernels not built; run pip install -e . --no-build-isolation")
        return 1

    rng = np.random.default_rng(0)
    a2k = random_boxes(rng, 2000)
    b2k = random_boxes(rng, 2000)
    e200k = random_boxes(rng, 200_000)
    f200k = random_boxes(rng, 200_000)
    nms_boxes = random_boxes(rng, 5000)
    nms_scores = rng.uniform(0, 1, size=5000)
    nms_order = np.lexsort((np.arange(5000), -nms_scores))

    cases = [
        ("iou_matrix 2000x2000",
         lambda impl: impl.iou_matrix(a2k, b2k)),
        ("ioum_matrix 2000x2000",
         lambda impl: impl.ioum_matrix(a2k, b2k, b2k, a2k)),
        ("iou_elementwise 200k",
         lambda impl: impl.iou_elementwise(e200k, f200k)),
        ("nms 5000 boxes @0.5",
         lambda impl: impl.nms_keep(nms_boxes, nms_order, 0.5)),
    ]

    print(f"{'case':<26} {'python':>10} {'native':>10} {'speedup':>9}")
    for label, fn in cases:
        t_py, r_py = best_of(lambda: fn(_python), args.repeats)
        t_nat, r_nat = best_of(lambda: fn(_native), args.repeats)
        np.testing.assert_array_equal(r_py, r_nat)
        print(f"{label:<26} {t_py * 1e3:>8.2f}ms {t_nat * 1e3:>8.2f}ms {t_py / t_nat:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
