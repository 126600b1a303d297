"""32:32 fixed-point event times.

Event timestamps are stored as a 64-bit unsigned integer counting
2^-32-second units: the upper 32 bits are whole seconds, the lower 32 bits
the fraction. That gives ~233 ps resolution, far below the ~5 us timing
precision of the recordings this pipeline ingests, while keeping ordering
and arithmetic exact integer operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FRACTION_BITS = 32
SCALE = 1 << FRACTION_BITS          # raw units per second
MAX_SECONDS = float(1 << 32)        # encodable range is [0, 2^32) seconds
RESOLUTION_S = 1.0 / SCALE


def encode_raw(t_s: float) -> int:
    """Encode seconds into raw 32:32 units, rounding half away from zero.

    Multiplying a float by 2^32 is a pure exponent shift and therefore
    exact, so the rounding decision is made on the true scaled value.
    """
    if not (0.0 <= t_s < MAX_SECONDS) or math.isnan(t_s):
        raise ValueError(f"time {t_s!r} outside encodable range [0, 2^32) s")
    scaled = t_s * SCALE
    whole = math.floor(scaled)
    # t_s >= 0, so half away from zero is half up.
    return int(whole) + (1 if scaled - whole >= 0.5 else 0)


def decode_raw(raw: int) -> float:
    """Decode raw 32:32 units back to seconds."""
    if raw < 0:
        raise ValueError("raw timestamp must be unsigned")
    return raw / SCALE


def encode_raw_array(t_s: np.ndarray) -> np.ndarray:
    """Vectorized :func:`encode_raw`; bit-identical to the scalar path."""
    t = np.asarray(t_s, dtype=np.float64)
    if t.size and (t.min() < 0.0 or t.max() >= MAX_SECONDS or np.isnan(t).any()):
        raise ValueError("times outside encodable range [0, 2^32) s")
    scaled = t * float(SCALE)
    whole = np.floor(scaled)
    raw = whole.astype(np.uint64) + (scaled - whole >= 0.5).astype(np.uint64)
    return raw


def decode_raw_array(raw: np.ndarray) -> np.ndarray:
    """Vectorized :func:`decode_raw`."""
    return np.asarray(raw, dtype=np.float64) / float(SCALE)


@dataclass(frozen=True, order=True, slots=True)
class SpikeTimestamp:
    """An event time in raw 32:32 units; ordering matches real-time order."""

    raw: int

    def __post_init__(self):
        if not 0 <= self.raw < 1 << 64:
            raise ValueError(f"raw timestamp {self.raw} outside u64 range")

    @classmethod
    def from_seconds(cls, t_s: float) -> "SpikeTimestamp":
        return cls(encode_raw(t_s))

    @property
    def seconds(self) -> float:
        return decode_raw(self.raw)

    def __repr__(self) -> str:
        return f"SpikeTimestamp({self.raw:#018x} ~ {self.seconds:.9f}s)"


def encode_timestamp(t_s: float) -> SpikeTimestamp:
    """Encode seconds to a :class:`SpikeTimestamp` (round half away from zero)."""
    return SpikeTimestamp(encode_raw(t_s))


def decode_timestamp(ts: SpikeTimestamp) -> float:
    """Return the seconds value a :class:`SpikeTimestamp` encodes."""
    return decode_raw(ts.raw)
