"""Portable deterministic PRNG for reproducible image sampling.

The generator is pinned so that every implementation of the pipeline, in
any language, selects the same images for the same seed:

* State: xoshiro256** 1.0 (Blackman & Vigna), four 64-bit words.
* Seeding: the four state words are the first four outputs of the
  splitmix64 sequence started at ``seed mod 2**64``.
* Bounded draws use rejection sampling (draw 64-bit words until one is
  below ``2**64 - (2**64 mod n)``, then reduce modulo ``n``), which is
  bias-free.
* Sampling k of n items is a partial Fisher-Yates shuffle over the index
  list [0, n): for i in 0..k-1 swap index i with index i + draw(n - i);
  the first k indices, in selection order, are the sample.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

_MASK64 = (1 << 64) - 1

T = TypeVar("T")


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return state, z


def _rotl(value: int, shift: int) -> int:
    return ((value << shift) | (value >> (64 - shift))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** seeded via splitmix64; see module docstring for the pinned contract."""

    def __init__(self, seed: int) -> None:
        state = seed & _MASK64
        words = []
        for _ in range(4):
            state, word = _splitmix64(state)
            words.append(word)
        self._s = words

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) via unbiased rejection sampling."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            word = self.next_u64()
            if word < limit:
                return word % bound


def sample_without_replacement(items: Sequence[T], count: int, seed: int) -> list[T]:
    """Select min(count, len(items)) items deterministically, in selection order."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    indices = list(range(len(items)))
    take = min(count, len(indices))
    rng = Xoshiro256StarStar(seed)
    for i in range(take):
        j = i + rng.below(len(indices) - i)
        indices[i], indices[j] = indices[j], indices[i]
    return [items[i] for i in indices[:take]]
