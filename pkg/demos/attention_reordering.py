"""Why the lightweight non-local block is cheap: associativity.

The block computes y = x (x^T x) / N for a flattened feature map
x in R^{N x c}. Grouping the product as (x x^T) x costs 2 N^2 c
multiplies and materializes an N x N affinity matrix; grouping it as
x (x^T x) costs 2 N c^2 and never forms anything larger than c x c.
Both give the same matrix, so picking the cheap order is free accuracy.

Run:  python3 demos/attention_reordering.py
"""

import time

import numpy as np

from salattn.attention import (count_flops, naive_nonlocal_reference,
                               nonlocal_reordered, nonlocal_rowwise,
                               nonlocal_unordered)
from salattn.rng import SplitMix64


def main():
    rng = SplitMix64(2024)

    print("agreement on small maps (elementwise, against the written-out double loop)")
    for h, w, c in [(3, 4, 5), (8, 8, 8), (5, 7, 2)]:
        x = (rng.f64_array((h, w, c)) - 0.5) * 0.5
        ref = naive_nonlocal_reference(x)
        for name, fn in [("rowwise", nonlocal_rowwise),
                         ("unordered", nonlocal_unordered),
                         ("reordered", nonlocal_reordered)]:
            gap = np.max(np.abs(fn(x) - ref))
            print(f"  {h}x{w}x{c}  {name:<10} max |difference| = {gap:.3e}")

    print()
    print("multiply counts at 64x64 with 32 channels (N = 4096)")
    for name in ("naive", "unordered", "reordered"):
        print(f"  {name:<10} {count_flops(name, 64, 64, 32):>14,} multiplies")
    ratio = count_flops("naive", 64, 64, 32) / count_flops("reordered", 64, 64, 32)
    print(f"  naive / reordered = {ratio:.1f}x  (= N / c = 4096 / 32)")

    print()
    print("measured wall time, median of 5 runs")
    x = (rng.f64_array((64, 64, 32)) - 0.5) * 0.5
    for name, fn in [("rowwise (pairwise)", nonlocal_rowwise),
                     ("unordered", nonlocal_unordered),
                     ("reordered", nonlocal_reordered)]:
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            fn(x)
            times.append(time.perf_counter() - t0)
        print(f"  {name:<20} {np.median(times) * 1e3:9.2f} ms")
    print()
    print("the reordered grouping is what the model uses in every forward pass")


if __name__ == "__main__":
    main()
