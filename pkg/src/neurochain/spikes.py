"""Spike-train containers, CSV ingestion, and the feature primitives the
decoder is built on: binned counts, windowed firing rates, and pairwise
synchrony.

Conventions
-----------
All intervals are half-open ``[a, b)``: a spike exactly on a bin's right
edge belongs to the next bin, and a windowed count at time ``t`` covers
``[t - window, t)``. Synchrony coincidence is the one exception: a spike of
one train coincides with the other train when their distance is at most
``delta`` (closed on both sides), keeping the relation symmetric.

Spike times are canonically stored in 32:32 fixed point; duplicate
timestamps on one channel are a data error, never silently merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ConfigError, DataError
from .timebase import (
    SpikeTimestamp,
    decode_raw_array,
    encode_raw,
    encode_raw_array,
)

REFERENCE_CHANNEL_COUNT = 33
POSITION_RATE_HZ = 500.0

SPIKE_CSV_HEADER = "channel,time_s"
POSITION_CSV_HEADER = "time_s,index_mm,thumb_mm"


@dataclass(frozen=True, slots=True)
class SpikeEvent:
    """One spike on one channel."""

    channel: int
    time: SpikeTimestamp

    def __post_init__(self):
        if self.channel < 0:
            raise DataError(f"negative channel id {self.channel}")


class SpikeTrain:
    """All spikes of one channel, strictly increasing in time.

    Times are stored both as raw fixed-point integers (the canonical form)
    and as a float64 seconds array used by the numeric feature code.
    """

    __slots__ = ("channel", "raw", "times_s")

    def __init__(self, channel: int, times_s: Iterable[float] | np.ndarray | None = None,
                 *, raw: np.ndarray | None = None):
        if channel < 0:
            raise DataError(f"negative channel id {channel}")
        if raw is None:
            arr = np.asarray(list(times_s) if not isinstance(times_s, np.ndarray) else times_s,
                             dtype=np.float64)
            raw = encode_raw_array(arr)
        else:
            raw = np.asarray(raw, dtype=np.uint64)
        if raw.ndim != 1:
            raise DataError("spike times must be a flat sequence")
        if raw.size > 1:
            diffs_ok = np.all(raw[1:] > raw[:-1])
            if not diffs_ok:
                if np.any(raw[1:] == raw[:-1]):
                    raise DataError(
                        f"duplicate spike timestamp on channel {channel}")
                raise DataError(
                    f"spike times on channel {channel} are not strictly increasing")
        self.channel = channel
        self.raw = raw
        self.times_s = decode_raw_array(raw)

    def __len__(self) -> int:
        return int(self.raw.size)

    def __repr__(self) -> str:
        return f"SpikeTrain(channel={self.channel}, n={len(self)})"

    def timestamps(self) -> list[SpikeTimestamp]:
        return [SpikeTimestamp(int(r)) for r in self.raw]

    def count_in(self, t0_s: float, t1_s: float) -> int:
        """Number of spikes in [t0, t1)."""
        lo = np.searchsorted(self.times_s, t0_s, side="left")
        hi = np.searchsorted(self.times_s, t1_s, side="left")
        return int(hi - lo)


@dataclass(frozen=True)
class SpikeBlock:
    """A contiguous chunk of a spike stream: events sorted by time, all
    inside [start, end)."""

    start: SpikeTimestamp
    end: SpikeTimestamp
    events: tuple[SpikeEvent, ...]

    def __post_init__(self):
        if self.end.raw < self.start.raw:
            raise DataError("block end precedes start")
        prev = None
        for ev in self.events:
            if not (self.start.raw <= ev.time.raw < self.end.raw):
                raise DataError(
                    f"event at {ev.time.seconds:.6f}s outside block "
                    f"[{self.start.seconds:.6f}, {self.end.seconds:.6f})")
            if prev is not None and ev.time.raw < prev:
                raise DataError("block events are not sorted by time")
            prev = ev.time.raw

    def __len__(self) -> int:
        return len(self.events)


class ChannelSet:
    """Ordered subset of channel ids with no duplicates."""

    __slots__ = ("ids",)

    def __init__(self, ids: Iterable[int]):
        ids = tuple(int(i) for i in ids)
        if len(set(ids)) != len(ids):
            raise ConfigError("channel set contains duplicate ids")
        if any(i < 0 for i in ids):
            raise ConfigError("channel set contains negative ids")
        self.ids = ids

    def validate_for(self, channel_count: int) -> None:
        bad = [i for i in self.ids if i >= channel_count]
        if bad:
            raise ConfigError(
                f"channel ids {bad} out of range for a {channel_count}-channel stream")

    def __contains__(self, channel: int) -> bool:
        return channel in self.ids

    def __len__(self) -> int:
        return len(self.ids)

    def intersection(self, other: "ChannelSet") -> "ChannelSet":
        keep = set(other.ids)
        return ChannelSet(i for i in self.ids if i in keep)


def select_channels(block: SpikeBlock, keep: ChannelSet) -> SpikeBlock:
    """Filter a block down to the kept channels, preserving order and bounds."""
    events = tuple(ev for ev in block.events if ev.channel in keep)
    return SpikeBlock(start=block.start, end=block.end, events=events)


# ---------------------------------------------------------------------------
# Feature primitives
# ---------------------------------------------------------------------------

def bin_counts(train: SpikeTrain, t0_s: float, t1_s: float, width_s: float) -> np.ndarray:
    """Spike counts per bin over [t0, t1).

    Bin ``k`` covers ``[t0 + k*width, t0 + (k+1)*width)``; a trailing
    partial bin is included but truncated at ``t1`` so the counts always
    sum to the number of spikes in ``[t0, t1)``.
    """
    if not t0_s < t1_s:
        raise ValueError("need t0 < t1")
    if width_s <= 0:
        raise ValueError("bin width must be positive")
    # floor-then-extend avoids a spurious empty bin when (t1-t0)/width is an
    # exact multiple but rounds just above the integer.
    nbins = int(math.floor((t1_s - t0_s) / width_s))
    while t0_s + nbins * width_s < t1_s:
        nbins += 1
    nbins = max(nbins, 1)
    edges = t0_s + width_s * np.arange(nbins + 1, dtype=np.float64)
    edges[-1] = min(edges[-1], t1_s)
    idx = np.searchsorted(train.times_s, edges, side="left")
    return np.diff(idx).astype(np.int64)


def firing_rate(train: SpikeTrain, t_s: float, window_s: float) -> float:
    """Spike count in [t - window, t) divided by the window length, in Hz."""
    if window_s <= 0:
        raise ValueError("window must be positive")
    return train.count_in(t_s - window_s, t_s) / window_s


def firing_rate_series(train: SpikeTrain, grid_s: np.ndarray, window_s: float) -> np.ndarray:
    """:func:`firing_rate` evaluated on a whole time grid at once."""
    if window_s <= 0:
        raise ValueError("window must be positive")
    grid = np.asarray(grid_s, dtype=np.float64)
    hi = np.searchsorted(train.times_s, grid, side="left")
    lo = np.searchsorted(train.times_s, grid - window_s, side="left")
    return (hi - lo) / window_s


def coincident_times(a: SpikeTrain, b: SpikeTrain, delta_s: float) -> np.ndarray:
    """Times of spikes of ``a`` that have a spike of ``b`` within +-delta
    (closed interval)."""
    if delta_s < 0:
        raise ValueError("delta must be non-negative")
    ta, tb = a.times_s, b.times_s
    lo = np.searchsorted(tb, ta - delta_s, side="left")
    hi = np.searchsorted(tb, ta + delta_s, side="right")
    return ta[hi > lo]


def synchrony(a: SpikeTrain, b: SpikeTrain, t_s: float, window_s: float,
              delta_s: float) -> float:
    """Normalized coincidence count between two trains in [t - window, t).

    Returns ``c / max(n_a, n_b)`` where ``c`` counts spikes of ``a`` inside
    the window that have a spike of ``b`` within +-delta (the partner may
    lie just outside the window), and ``n_a``, ``n_b`` are the trains'
    window counts. Zero when both windows are empty.
    """
    return float(synchrony_series(a, b, np.array([t_s]), window_s, delta_s)[0])


def synchrony_series(a: SpikeTrain, b: SpikeTrain, grid_s: np.ndarray,
                     window_s: float, delta_s: float) -> np.ndarray:
    """:func:`synchrony` evaluated on a whole time grid at once."""
    if window_s <= 0:
        raise ValueError("window must be positive")
    if a.channel == b.channel:
        raise ValueError("synchrony requires two distinct channels")
    grid = np.asarray(grid_s, dtype=np.float64)
    coinc = coincident_times(a, b, delta_s)
    c = (np.searchsorted(coinc, grid, side="left")
         - np.searchsorted(coinc, grid - window_s, side="left"))
    na = (np.searchsorted(a.times_s, grid, side="left")
          - np.searchsorted(a.times_s, grid - window_s, side="left"))
    nb = (np.searchsorted(b.times_s, grid, side="left")
          - np.searchsorted(b.times_s, grid - window_s, side="left"))
    denom = np.maximum(na, nb)
    out = np.zeros(grid.shape, dtype=np.float64)
    nz = denom > 0
    out[nz] = c[nz] / denom[nz]
    return out


# ---------------------------------------------------------------------------
# CSV schemas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpikeCsv:
    """Result of reading a spike CSV: events in file order plus stream facts."""

    events: tuple[SpikeEvent, ...]
    channel_count: int

    def __len__(self) -> int:
        return len(self.events)


def read_spike_csv(stream: TextIO, *, expected_channels: int | None = None) -> SpikeCsv:
    """Parse the spike CSV schema: header ``channel,time_s`` then
    ``<int>,<seconds>`` rows, sorted per channel (not necessarily globally).

    Raises :class:`DataError` with the offending line number on malformed
    rows or non-monotonic per-channel times; :class:`ConfigError` when the
    file's channel count disagrees with ``expected_channels``.
    """
    header = stream.readline()
    if header.strip() != SPIKE_CSV_HEADER:
        raise DataError(f"line 1: expected header {SPIKE_CSV_HEADER!r}, "
                        f"got {header.strip()!r}")
    events: list[SpikeEvent] = []
    last_raw: dict[int, int] = {}
    max_channel = -1
    for lineno, line in enumerate(stream, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            channel = int(parts[0])
            t_s = float(parts[1])
        except ValueError:
            raise DataError(f"line {lineno}: malformed row {line!r}") from None
        if channel < 0:
            raise DataError(f"line {lineno}: negative channel id {channel}")
        try:
            raw = encode_raw(t_s)
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        prev = last_raw.get(channel)
        if prev is not None and raw <= prev:
            raise DataError(
                f"line {lineno}: channel {channel} times not strictly increasing")
        last_raw[channel] = raw
        max_channel = max(max_channel, channel)
        events.append(SpikeEvent(channel=channel, time=SpikeTimestamp(raw)))
    channel_count = max_channel + 1
    if expected_channels is not None:
        if events and channel_count > expected_channels:
            raise ConfigError(
                f"stream uses channel id {max_channel} but only "
                f"{expected_channels} channels were declared")
        channel_count = expected_channels
    return SpikeCsv(events=tuple(events), channel_count=channel_count)


def write_spike_csv(stream: TextIO, trains: Sequence[SpikeTrain]) -> int:
    """Write trains to the spike CSV schema (per-channel blocks, 6 fractional
    digits); returns the number of rows written."""
    stream.write(SPIKE_CSV_HEADER + "\n")
    rows = 0
    for train in trains:
        for t in train.times_s:
            stream.write(f"{train.channel},{t:.6f}\n")
            rows += 1
    return rows


def group_into_trains(csv: SpikeCsv) -> list[SpikeTrain]:
    """Split a parsed spike CSV into one train per channel (empty trains
    included so indices line up with channel ids)."""
    per_channel: list[list[int]] = [[] for _ in range(csv.channel_count)]
    for ev in csv.events:
        per_channel[ev.channel].append(ev.time.raw)
    return [SpikeTrain(c, raw=np.array(raws, dtype=np.uint64))
            for c, raws in enumerate(per_channel)]


def write_position_csv(stream: TextIO, index_mm: np.ndarray, thumb_mm: np.ndarray,
                       *, start_s: float = 0.0, rate_hz: float = POSITION_RATE_HZ) -> int:
    """Write the position CSV schema: 500 Hz rows of ``time_s,index_mm,thumb_mm``
    with 3 fractional digits on positions."""
    index_mm = np.asarray(index_mm, dtype=np.float64)
    thumb_mm = np.asarray(thumb_mm, dtype=np.float64)
    if index_mm.shape != thumb_mm.shape:
        raise DataError("index and thumb position arrays differ in length")
    period = 1.0 / rate_hz
    stream.write(POSITION_CSV_HEADER + "\n")
    for k in range(index_mm.size):
        t = start_s + k * period
        stream.write(f"{t:.6f},{index_mm[k]:.3f},{thumb_mm[k]:.3f}\n")
    return int(index_mm.size)


def read_position_csv(stream: TextIO) -> tuple[float, np.ndarray, np.ndarray]:
    """Read the position CSV schema; returns (start_s, index_mm, thumb_mm).

    The fixed 500 Hz sampling is validated against the time column.
    """
    header = stream.readline()
    if header.strip() != POSITION_CSV_HEADER:
        raise DataError(f"line 1: expected header {POSITION_CSV_HEADER!r}, "
                        f"got {header.strip()!r}")
    times: list[float] = []
    index: list[float] = []
    thumb: list[float] = []
    for lineno, line in enumerate(stream, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            times.append(float(parts[0]))
            index.append(float(parts[1]))
            thumb.append(float(parts[2]))
        except ValueError:
            raise DataError(f"line {lineno}: malformed row {line!r}") from None
    if not times:
        return 0.0, np.array([], dtype=np.float64), np.array([], dtype=np.float64)
    t = np.asarray(times)
    period = 1.0 / POSITION_RATE_HZ
    expected = t[0] + period * np.arange(t.size)
    if np.max(np.abs(t - expected)) > period / 4:
        raise DataError("position CSV is not uniformly sampled at 500 Hz")
    return float(t[0]), np.asarray(index), np.asarray(thumb)
