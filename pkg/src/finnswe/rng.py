"""Portable 64-bit counter-based generator (SplitMix64).

State transition, for reproducing streams in other languages::

    state  <- (state + 0x9E3779B97F4A7C15) mod 2**64
    z      <- state
    z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    output <- z ^ (z >> 31)

Doubles are ``(output >> 11) * 2**-53`` in [0, 1). Sub-streams are seeded with
``mix64(mix64(seed) ^ key)``, applied once per key in order.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _key_int(key) -> int:
    if isinstance(key, int):
        return key & _MASK
    # strings hashed with FNV-1a so the mapping is stable across processes
    h = 0xCBF29CE484222325
    for b in str(key).encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def derive_seed(seed: int, *keys) -> int:
    s = seed & _MASK
    for key in keys:
        s = mix64(mix64(s) ^ _key_int(key))
    return s


class SplitMix64:
    def __init__(self, seed: int, *keys):
        self.state = derive_seed(seed, *keys)

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        return mix64(self.state)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return low + (high - low) * ((self.next_u64() >> 11) * 2.0**-53)

    def integers(self, low: int, high: int) -> int:
        """Integer in [low, high)."""
        span = high - low
        if span <= 0:
            raise ValueError("empty range")
        return low + int(self.uniform() * span) % span

    def uniform_array(self, n: int, low: float = 0.0, high: float = 1.0) -> list[float]:
        return [self.uniform(low, high) for _ in range(n)]

    def permutation(self, n: int) -> list[int]:
        # Fisher-Yates, high to low
        out = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def normal(self) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log1p(-u1)) * math.cos(2.0 * math.pi * u2)
