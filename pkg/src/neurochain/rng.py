"""Portable deterministic random numbers (SplitMix64).

The generator is pinned to SplitMix64 (Steele, Lea & Flood's constants:
increment 0x9E3779B97F4A7C15, mixers 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB) so that any reimplementation in another language can
reproduce synthetic datasets bit for bit. Output k of a stream seeded with
s is ``mix(s + (k+1) * 0x9E3779B97F4A7C15)``, which also makes the stream a
pure counter function and therefore trivially vectorizable.

Uniform doubles take the top 53 bits of the u64 output, giving values in
[0, 1).
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_DOUBLE_SCALE = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer: bijective avalanche mix of a u64."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def substream_seed(seed: int, index: int) -> int:
    """Derive an independent sub-seed, e.g. one per spike channel.

    Defined as ``mix64(seed ^ mix64(index + 1))`` so the rule is stable
    across implementations.
    """
    return mix64((seed & _MASK) ^ mix64((index + 1) & _MASK))


class SplitMix64:
    """Sequential SplitMix64 stream."""

    def __init__(self, seed: int):
        self._seed = seed & _MASK
        self._count = 0

    def next_u64(self) -> int:
        self._count += 1
        return mix64((self._seed + self._count * _GAMMA) & _MASK)

    def next_float(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    @property
    def draws(self) -> int:
        return self._count

    def skip(self, n: int) -> None:
        self._count += n

    def floats(self, n: int) -> np.ndarray:
        """Next ``n`` uniform doubles as an array (same stream positions
        the scalar path would consume)."""
        counters = np.uint64(self._count) + np.arange(1, n + 1, dtype=np.uint64)
        states = np.uint64(self._seed) + counters * np.uint64(_GAMMA)
        out = _mix64_array(states)
        self._count += n
        return (out >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps modulo 2^64, matching the scalar masked path.
    z = z.astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))
