"""SplitMix64: a tiny counter-based PRNG pinned for reproducibility.

State advances by the golden-ratio increment; each output is a finalizing
mix of the new state. Because the state is a pure counter, a block of n
draws can be produced vectorized in numpy uint64 and matches the scalar
sequence bit for bit. Doubles take the top 53 bits, uniform in [0, 1).

Not cryptographic; statistical quality is ample for synthetic data and
weight init, and the pinned constants keep every artifact reproducible
across platforms.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """The SplitMix64 output function on a 64-bit integer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return mix64(self._state)

    def next_f64(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is negligible for n << 2^64."""
        if n < 1:
            raise ValueError(f"randint needs n >= 1, got {n}")
        return self.next_u64() % n

    def u64_array(self, n: int) -> np.ndarray:
        """Next n outputs as uint64, computed vectorized."""
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + np.uint64(_GOLDEN) * np.arange(1, n + 1, dtype=np.uint64)
            self._state = (self._state + n * _GOLDEN) & _MASK
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            return z ^ (z >> np.uint64(31))

    def f64_array(self, shape) -> np.ndarray:
        """Array of doubles in [0, 1) with the same draw order as next_f64."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        out = (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * _INV53
        return out.reshape(shape)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_f64()

    def sample_distinct(self, n: int, k: int) -> list:
        """k distinct integers from [0, n), order determined by the draws."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct values from {n}")
        idx = list(range(n))
        for i in range(k):
            j = i + self.randint(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k]
