"""Seeded shuffling primitives used wherever the pipeline randomizes order.

Corpus splits and merged tuning sets must be reproducible from
``(input, seed)`` alone, across interpreter versions and platforms, so the
shuffle is pinned to an explicit Fisher-Yates walk driven by a splitmix64
stream instead of the stdlib PRNG (whose shuffle algorithm is not part of
its compatibility contract).
"""

from __future__ import annotations

from typing import Sequence, TypeVar

_MASK64 = (1 << 64) - 1

T = TypeVar("T")


class SplitMix64:
    """splitmix64 generator: 64-bit state, one multiply-xorshift per output."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound), unbiased via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        # Largest multiple of `bound` that fits in 64 bits; values at or
        # above it would skew the modulo.
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % bound)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % bound


def seeded_permutation(n: int, seed: int) -> list[int]:
    """Fisher-Yates permutation of range(n), fully determined by the seed."""
    indices = list(range(n))
    rng = SplitMix64(seed)
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        indices[i], indices[j] = indices[j], indices[i]
    return indices


def seeded_shuffle(items: Sequence[T], seed: int) -> list[T]:
    """Return a new list with the items in seeded-permutation order."""
    return [items[i] for i in seeded_permutation(len(items), seed)]
