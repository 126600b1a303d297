"""Virtual and real clocks behind one interface.

Every time-driven component (arm simulator, pipeline runner, control loop)
takes a clock so tests can run deterministically on a manually advanced
virtual clock while live runs pace themselves against the monotonic clock.
"""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now_s(self) -> float: ...
    def sleep_until(self, t_s: float) -> None: ...


class VirtualClock:
    """Manually advanced clock; ``sleep_until`` jumps instead of waiting."""

    def __init__(self, start_s: float = 0.0):
        self._now = float(start_s)

    def now_s(self) -> float:
        return self._now

    def advance(self, dt_s: float) -> None:
        if dt_s < 0:
            raise ValueError("cannot advance a clock backwards")
        self._now += dt_s

    def sleep_until(self, t_s: float) -> None:
        if t_s > self._now:
            self._now = t_s

    @property
    def is_virtual(self) -> bool:
        return True


class MonotonicClock:
    """Wall clock counting seconds since construction."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now_s(self) -> float:
        return time.monotonic() - self._t0

    def sleep_until(self, t_s: float) -> None:
        delay = t_s - self.now_s()
        if delay > 0:
            time.sleep(delay)

    @property
    def is_virtual(self) -> bool:
        return False


def now_ms(clock: Clock) -> int:
    """Clock time as integer milliseconds (the wire timestamp unit)."""
    return int(clock.now_s() * 1000.0)
