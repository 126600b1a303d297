"""Uniformly sampled scalar signals (finger trajectories) at the 500 Hz
position rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

SAMPLE_RATE_HZ = 500.0
SAMPLE_PERIOD_S = 1.0 / SAMPLE_RATE_HZ


@dataclass(frozen=True)
class FingerTrajectory:
    """One finger's position over time, sampled at 500 Hz, in millimeters."""

    start_s: float
    positions_mm: np.ndarray
    period_s: float = SAMPLE_PERIOD_S

    def __post_init__(self):
        arr = np.asarray(self.positions_mm, dtype=np.float64)
        if arr.ndim != 1:
            raise DataError("trajectory must be one-dimensional")
        if arr.size and not np.all(np.isfinite(arr)):
            raise DataError("trajectory contains non-finite samples")
        object.__setattr__(self, "positions_mm", arr)
        if self.period_s <= 0:
            raise DataError("sample period must be positive")

    def __len__(self) -> int:
        return int(self.positions_mm.size)

    def time_at(self, k: int) -> float:
        return self.start_s + k * self.period_s

    def times(self) -> np.ndarray:
        return self.start_s + self.period_s * np.arange(len(self), dtype=np.float64)

    def slice(self, k0: int, k1: int) -> "FingerTrajectory":
        return FingerTrajectory(start_s=self.time_at(k0),
                                positions_mm=self.positions_mm[k0:k1],
                                period_s=self.period_s)
