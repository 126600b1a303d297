"""Proportional closed-loop control of the finger aperture, plus the
requested-vs-actual analytics (transport lag, oscillation) used to study a
delayed loop.

The loop polls the arm's (delayed) position feedback every period, turns
the error into a velocity command ``v = clamp(Kp * (target - feedback))``,
and sends it either as a direct aperture velocity on an in-process
simulator or as successive setpoint increments over a live connection.
With transport delay in the loop a high gain oscillates and a low gain
settles; :func:`measure_lag` and :func:`detect_oscillation` quantify both
regimes from the recorded trace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, TextIO

import numpy as np

from .armsim import ArmSimulator
from .clock import Clock, MonotonicClock
from .errors import DataError, MetricError, TransportError, TransportTimeout
from .netproto import Target, ProtoClient

TRACE_CSV_HEADER = "t_ms,requested_mm,actual_mm,command_mm_s"
ARM_TRACE_CSV_HEADER = "t_ms,requested_mm,actual_mm"


@dataclass(frozen=True)
class PControllerConfig:
    gain_per_s: float
    period_ms: float = 20.0
    velocity_clamp_mm_s: float = 40.0

    def __post_init__(self):
        if self.gain_per_s < 0:
            raise ValueError("gain must be >= 0")
        if self.period_ms <= 0:
            raise ValueError("period must be positive")

    @property
    def period_s(self) -> float:
        return self.period_ms / 1000.0


@dataclass(frozen=True, slots=True)
class TraceRecord:
    t_ms: int
    requested_mm: float
    actual_mm: float
    command_mm_s: float


@dataclass(frozen=True)
class LoopTrace:
    records: tuple[TraceRecord, ...]
    complete: bool

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        t = np.array([r.t_ms for r in self.records], dtype=np.float64)
        req = np.array([r.requested_mm for r in self.records])
        act = np.array([r.actual_mm for r in self.records])
        cmd = np.array([r.command_mm_s for r in self.records])
        return t, req, act, cmd


def control_step(cfg: PControllerConfig, target_mm: float, feedback_mm: float) -> float:
    """Clamped proportional velocity command in mm/s."""
    v = cfg.gain_per_s * (target_mm - feedback_mm)
    return min(max(v, -cfg.velocity_clamp_mm_s), cfg.velocity_clamp_mm_s)


class Plant(Protocol):
    """What the loop needs from an arm: delayed feedback in, commands out."""

    def poll_feedback_mm(self) -> float: ...
    def apply_velocity(self, v_mm_s: float, dt_s: float, t_ms: int) -> None: ...
    def send_target(self, distance_mm: float, t_ms: int) -> None: ...
    def advance_to(self, t_s: float) -> None: ...


class InProcessPlant:
    """Drives an :class:`ArmSimulator` directly; deterministic under the
    simulator's virtual time. Velocity commands pass through the
    simulator's command latency queue and persist until replaced."""

    def __init__(self, sim: ArmSimulator):
        self.sim = sim
        self._seq = 0

    def poll_feedback_mm(self) -> float:
        return self.sim.delayed_snapshot().aperture_mm

    def apply_velocity(self, v_mm_s: float, dt_s: float, t_ms: int) -> None:
        self.sim.submit_velocity(v_mm_s)

    def send_target(self, distance_mm: float, t_ms: int) -> None:
        self._seq += 1
        reply = self.sim.submit(Target(seq=self._seq, t_ms=t_ms,
                                       distance_mm=distance_mm))
        if reply.__class__.__name__ == "Err":
            raise TransportError(f"simulator rejected target: {reply}")

    def advance_to(self, t_s: float) -> None:
        self.sim.advance_to(t_s)


class RemotePlant:
    """Drives a live arm server over the wire protocol.

    Velocity commands become successive setpoint increments: the plant
    integrates its own last setpoint by ``v * dt`` and sends the result
    as a TARGET; the server's local tracking follows it.
    """

    def __init__(self, client: ProtoClient, clock: Clock | None = None,
                 aperture_range_mm: tuple[float, float] = (0.0, 40.0)):
        self.client = client
        self.clock = clock or MonotonicClock()
        self.range = aperture_range_mm
        self._setpoint: float | None = None

    def poll_feedback_mm(self) -> float:
        return self.client.poll_state().aperture_mm

    def apply_velocity(self, v_mm_s: float, dt_s: float, t_ms: int) -> None:
        if self._setpoint is None:
            self._setpoint = self.poll_feedback_mm()
        lo, hi = self.range
        self._setpoint = min(max(self._setpoint + v_mm_s * dt_s, lo), hi)
        self.client.send_target(self._setpoint, t_ms)

    def send_target(self, distance_mm: float, t_ms: int) -> None:
        self.client.send_target(distance_mm, t_ms)

    def advance_to(self, t_s: float) -> None:
        self.clock.sleep_until(t_s)


def run_loop(cfg: PControllerConfig, target: Callable[[float], float] | float,
             plant, duration_s: float) -> LoopTrace:
    """Run the proportional loop for ``duration`` and record one
    :class:`TraceRecord` per period.

    If no fresh feedback arrives within a period the previous value is
    reused; a transport failure truncates the trace and flags it
    incomplete.
    """
    signal = target if callable(target) else (lambda _t, _v=float(target): _v)
    n = int(round(duration_s / cfg.period_s))
    records: list[TraceRecord] = []
    feedback: float | None = None
    complete = True
    for k in range(n):
        t_s = k * cfg.period_s
        t_ms = int(round(t_s * 1000.0))
        requested = float(signal(t_s))
        try:
            feedback = plant.poll_feedback_mm()
        except TransportTimeout:
            if feedback is None:
                complete = False
                break
        except TransportError:
            complete = False
            break
        v = control_step(cfg, requested, feedback)
        try:
            plant.apply_velocity(v, cfg.period_s, t_ms)
        except TransportError:
            complete = False
            break
        records.append(TraceRecord(t_ms=t_ms, requested_mm=requested,
                                   actual_mm=feedback, command_mm_s=v))
        plant.advance_to((k + 1) * cfg.period_s)
    return LoopTrace(records=tuple(records), complete=complete)


def stream_targets(plant, signal: Callable[[float], float], duration_s: float,
                   period_ms: float = 20.0) -> LoopTrace:
    """Stream a target trajectory without closing the loop (the arm's own
    tracking follows it); records requested vs delayed actual for lag
    measurement.

    Each row pairs the target sent at the period start with the freshest
    feedback once the period has elapsed, so the measured shift reflects
    the transport latency rather than the poll scheduling.
    """
    period_s = period_ms / 1000.0
    n = int(round(duration_s / period_s))
    records: list[TraceRecord] = []
    complete = True
    for k in range(n):
        t_s = k * period_s
        t_ms = int(round(t_s * 1000.0))
        requested = float(signal(t_s))
        try:
            plant.send_target(requested, t_ms)
            plant.advance_to((k + 1) * period_s)
            feedback = plant.poll_feedback_mm()
        except TransportError:
            complete = False
            break
        records.append(TraceRecord(t_ms=t_ms, requested_mm=requested,
                                   actual_mm=feedback, command_mm_s=0.0))
    return LoopTrace(records=tuple(records), complete=complete)


# ---------------------------------------------------------------------------
# Analytics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LagEstimate:
    lag_ms: float
    peak_correlation: float
    confident: bool


def measure_lag(requested: np.ndarray, actual: np.ndarray, period_ms: float,
                max_lag_ms: float = 2000.0, min_correlation: float = 0.3,
                ) -> LagEstimate:
    """Shift of ``actual`` relative to ``requested`` maximizing their
    cross-correlation, on the trace-period grid.

    Positive lag means the actual position trails the request. Adding a
    constant to both signals does not change the estimate (Pearson
    correlation per shift). Raises :class:`MetricError` for traces shorter
    than 2 s or with a constant requested signal; estimates whose peak
    correlation is below ``min_correlation`` are flagged not confident.
    """
    r = np.asarray(requested, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if r.size != a.size:
        raise DataError("requested/actual length mismatch")
    if r.size * period_ms < 2000.0:
        raise MetricError("trace too short for lag measurement (< 2 s)")
    if np.ptp(r) == 0.0:
        raise MetricError("requested signal is constant; lag undefined")
    max_shift = min(int(max_lag_ms / period_ms), r.size - 8)
    shifts: list[int] = []
    corrs: list[float] = []
    for s in range(-max_shift, max_shift + 1):
        if s >= 0:
            x, y = r[: r.size - s], a[s:]
        else:
            x, y = r[-s:], a[: a.size + s]
        if x.size < 8:
            continue
        sx = x - x.mean()
        sy = y - y.mean()
        denom = np.sqrt((sx ** 2).sum() * (sy ** 2).sum())
        if denom == 0.0:
            continue
        shifts.append(s)
        corrs.append(float(sx @ sy / denom))
    if not corrs:
        raise MetricError("no usable overlap for lag measurement")
    best_c = max(corrs)
    # Periodic signals tie at shifts one signal period apart; prefer the
    # smallest shift that explains the data.
    best_s = min((s for s, c in zip(shifts, corrs) if c >= best_c - 1e-9),
                 key=lambda s: (abs(s), s))
    return LagEstimate(lag_ms=best_s * period_ms, peak_correlation=best_c,
                       confident=best_c >= min_correlation)


@dataclass(frozen=True)
class OscillationReport:
    sign_changes: int
    peak_amplitude_mm: float
    decay_ratio: float


def detect_oscillation(t_ms: np.ndarray, requested: np.ndarray,
                       actual: np.ndarray, window_s: float) -> OscillationReport:
    """Oscillation statistics of the error over the trace's final window.

    Counts strict sign changes of ``requested - actual`` (zeros carry no
    sign); the decay ratio compares the peak error amplitude of the
    window's second half against the whole window, so a sustained
    oscillation scores near 1 and a settling response near 0.
    """
    t = np.asarray(t_ms, dtype=np.float64)
    e = np.asarray(requested, dtype=np.float64) - np.asarray(actual, dtype=np.float64)
    if t.size != e.size or t.size == 0:
        raise DataError("empty or mismatched trace")
    mask = t >= t[-1] - window_s * 1000.0
    e = e[mask]
    signs = np.sign(e)
    signs = signs[signs != 0]
    changes = int(np.count_nonzero(np.diff(signs) != 0))
    peak = float(np.max(np.abs(e))) if e.size else 0.0
    if peak == 0.0:
        return OscillationReport(sign_changes=changes, peak_amplitude_mm=0.0,
                                 decay_ratio=0.0)
    half_peak = float(np.max(np.abs(e[e.size // 2:])))
    return OscillationReport(sign_changes=changes, peak_amplitude_mm=peak,
                             decay_ratio=half_peak / peak)


# ---------------------------------------------------------------------------
# Trace CSV
# ---------------------------------------------------------------------------

def write_trace_csv(stream: TextIO, records: Sequence[TraceRecord]) -> int:
    stream.write(TRACE_CSV_HEADER + "\n")
    for r in records:
        stream.write(f"{r.t_ms},{r.requested_mm:.3f},{r.actual_mm:.3f},"
                     f"{r.command_mm_s:.3f}\n")
    return len(records)


def write_arm_trace_csv(stream: TextIO, rows: Sequence[tuple[int, float, float]]) -> int:
    stream.write(ARM_TRACE_CSV_HEADER + "\n")
    for t_ms, req, act in rows:
        stream.write(f"{t_ms},{req:.3f},{act:.3f}\n")
    return len(rows)


def read_trace_csv(stream: TextIO) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
    """Read a trace CSV (controller 4-column or arm 3-column form);
    returns (t_ms, requested, actual, command-or-None)."""
    header = stream.readline().strip()
    if header == TRACE_CSV_HEADER:
        ncols = 4
    elif header == ARM_TRACE_CSV_HEADER:
        ncols = 3
    else:
        raise DataError(f"unknown trace header {header!r}")
    rows: list[list[float]] = []
    for lineno, line in enumerate(stream, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise DataError(f"line {lineno}: expected {ncols} fields")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise DataError(f"line {lineno}: malformed row {line!r}") from None
    if not rows:
        raise DataError("trace contains no rows")
    arr = np.asarray(rows)
    cmd = arr[:, 3] if ncols == 4 else None
    return arr[:, 0], arr[:, 1], arr[:, 2], cmd
