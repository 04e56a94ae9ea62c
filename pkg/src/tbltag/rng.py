"""Deterministic pseudo-random stream.

Training runs must be reproducible bit-for-bit across platforms and Python
versions, so all sampling is built on an explicit SplitMix64 generator
rather than ``random.Random``, whose integer draws are not guaranteed
stable between interpreter versions.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


class RngStream:
    """SplitMix64 generator: same seed, same sequence of draws, everywhere.

    Reference: Steele, Lea & Flood's SplitMix algorithm; the 64-bit
    finalizer constants below are the standard ones.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange() bound must be positive")
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), uniform, returned sorted.

        Floyd's algorithm: consumes exactly k draws, independent of n.
        """
        if k < 0 or k > n:
            raise ValueError(f"cannot sample {k} distinct indices from range({n})")
        chosen: set[int] = set()
        for i in range(n - k, n):
            j = self.randrange(i + 1)
            chosen.add(i if j in chosen else j)
        return sorted(chosen)
