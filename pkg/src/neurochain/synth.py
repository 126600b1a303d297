"""Synthetic ground truth: lever-like finger trajectories plus
inhomogeneous-Poisson spike trains whose rates encode lever velocity.

The real recordings are not distributable, so this module is the oracle the
rest of the chain is tested against: trajectories are built from smooth
grip pulses, and each channel fires as a Poisson process with rate
``max(0, baseline + gain * v(t))`` where ``v`` is the driving finger's
velocity. Rates encode velocity rather than position so that a
change-in-position regression on firing rates is well posed by
construction.

Everything is a pure function of (seed, config) through the portable
SplitMix64 stream in :mod:`neurochain.rng`; channel ``c`` draws from the
sub-seed ``substream_seed(seed, c)``, so per-channel generation is
order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .rng import SplitMix64, substream_seed
from .signals import SAMPLE_PERIOD_S, FingerTrajectory
from .spikes import REFERENCE_CHANNEL_COUNT, SpikeTrain
from .timebase import encode_raw_array


@dataclass(frozen=True)
class GripProfile:
    """Shape of the coordinated grip pulses.

    Events start at ``first_event_s`` and repeat every ``60/events_per_minute``
    seconds. Each pulse is a smoothstep rise, a hold, and a smoothstep
    release; the thumb moves with the index at ``thumb_scale`` amplitude.
    """

    events_per_minute: float = 6.0
    first_event_s: float = 2.0
    rise_s: float = 0.5
    hold_s: float = 1.0
    release_s: float = 0.7
    amplitude_mm: float = 10.0
    thumb_scale: float = 0.8
    rest_mm: float = 2.0


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1
    channels: int = REFERENCE_CHANNEL_COUNT
    duration_s: float = 60.0
    baseline_hz: tuple[float, ...] | None = None
    gain_hz_per_mm_s: tuple[float, ...] | None = None
    profile: GripProfile = field(default_factory=GripProfile)
    noise_mm: float = 0.0

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError("need at least one channel")
        if self.duration_s < 0:
            raise ConfigError("duration must be non-negative")
        for name, arr in (("baseline_hz", self.baseline_hz),
                          ("gain_hz_per_mm_s", self.gain_hz_per_mm_s)):
            if arr is not None and len(arr) != self.channels:
                raise ConfigError(f"{name} must have one entry per channel")

    def baselines(self) -> np.ndarray:
        if self.baseline_hz is not None:
            return np.asarray(self.baseline_hz, dtype=np.float64)
        return default_baselines(self.channels)

    def gains(self) -> np.ndarray:
        if self.gain_hz_per_mm_s is not None:
            return np.asarray(self.gain_hz_per_mm_s, dtype=np.float64)
        return default_gains(self.channels)


def default_baselines(channels: int) -> np.ndarray:
    """Per-channel resting rates, 18..26 Hz, fixed pattern.

    High enough that the negatively tuned channels rarely rectify to zero
    during movements, which keeps the rate code informative both ways.
    """
    return 18.0 + 2.0 * (np.arange(channels) % 5).astype(np.float64)


def default_gains(channels: int) -> np.ndarray:
    """Velocity-tuning gains with alternating sign so both closing and
    opening movements are represented (arbitrary tuning; the real cells'
    tuning is unknown)."""
    mag = 1.0 + 0.1 * (np.arange(channels) % 5)
    sign = np.where(np.arange(channels) % 2 == 0, 1.0, -1.0)
    return mag * sign


def _smoothstep(u: np.ndarray) -> np.ndarray:
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_vel(u: np.ndarray) -> np.ndarray:
    # d/du of the smoothstep, so velocity = amplitude * this / ramp length
    return 6.0 * u * (1.0 - u)


def _pulse(t: np.ndarray, profile: GripProfile, amplitude: float,
           start_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity contribution of one grip pulse."""
    pos = np.zeros_like(t)
    vel = np.zeros_like(t)
    rise_end = start_s + profile.rise_s
    hold_end = rise_end + profile.hold_s
    release_end = hold_end + profile.release_s

    m = (t >= start_s) & (t < rise_end)
    u = (t[m] - start_s) / profile.rise_s
    pos[m] = amplitude * _smoothstep(u)
    vel[m] = amplitude * _smoothstep_vel(u) / profile.rise_s

    m = (t >= rise_end) & (t < hold_end)
    pos[m] = amplitude

    m = (t >= hold_end) & (t < release_end)
    u = (t[m] - hold_end) / profile.release_s
    pos[m] = amplitude * (1.0 - _smoothstep(u))
    vel[m] = -amplitude * _smoothstep_vel(u) / profile.release_s
    return pos, vel


def _event_starts(duration_s: float, profile: GripProfile) -> list[float]:
    if profile.events_per_minute <= 0:
        return []
    period = 60.0 / profile.events_per_minute
    pulse_len = profile.rise_s + profile.hold_s + profile.release_s
    starts = []
    t = profile.first_event_s
    while t + pulse_len <= duration_s:
        starts.append(t)
        t += period
    return starts


def gen_trajectories(cfg: SynthConfig) -> tuple[FingerTrajectory, FingerTrajectory]:
    """Coordinated index/thumb trajectories (C1-smooth grip pulses at 500 Hz)."""
    n = int(round(cfg.duration_s / SAMPLE_PERIOD_S))
    t = SAMPLE_PERIOD_S * np.arange(n, dtype=np.float64)
    index = np.full(n, cfg.profile.rest_mm)
    thumb = np.full(n, cfg.profile.rest_mm)
    for start in _event_starts(cfg.duration_s, cfg.profile):
        pos_i, _ = _pulse(t, cfg.profile, cfg.profile.amplitude_mm, start)
        pos_t, _ = _pulse(t, cfg.profile, cfg.profile.amplitude_mm * cfg.profile.thumb_scale, start)
        index += pos_i
        thumb += pos_t
    if cfg.noise_mm > 0.0 and n:
        rng = SplitMix64(substream_seed(cfg.seed, 1_000_000))
        index = index + cfg.noise_mm * _gauss_pairs(rng, n)
        rng2 = SplitMix64(substream_seed(cfg.seed, 1_000_001))
        thumb = thumb + cfg.noise_mm * _gauss_pairs(rng2, n)
    return (FingerTrajectory(0.0, index), FingerTrajectory(0.0, thumb))


def _gauss_pairs(rng: SplitMix64, n: int) -> np.ndarray:
    """Standard normals via Box-Muller on the portable stream."""
    m = (n + 1) // 2
    u1 = np.maximum(rng.floats(m), 1e-300)
    u2 = rng.floats(m)
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * m)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:n]


def velocity_grids(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic lever velocities (mm/s) on the 500 Hz grid: (t, v_index, v_thumb)."""
    n = int(round(cfg.duration_s / SAMPLE_PERIOD_S))
    t = SAMPLE_PERIOD_S * np.arange(n, dtype=np.float64)
    v_index = np.zeros(n)
    v_thumb = np.zeros(n)
    for start in _event_starts(cfg.duration_s, cfg.profile):
        _, vel_i = _pulse(t, cfg.profile, cfg.profile.amplitude_mm, start)
        _, vel_t = _pulse(t, cfg.profile, cfg.profile.amplitude_mm * cfg.profile.thumb_scale, start)
        v_index += vel_i
        v_thumb += vel_t
    return t, v_index, v_thumb


def channel_rate_grid(cfg: SynthConfig, channel: int) -> np.ndarray:
    """Target firing rate lambda(t) for one channel on the 500 Hz grid.

    Even channels are driven by index velocity, odd channels by thumb
    velocity; the continuous-time rate is defined as the linear
    interpolation of this grid.
    """
    t, v_index, v_thumb = velocity_grids(cfg)
    v = v_index if channel % 2 == 0 else v_thumb
    lam = cfg.baselines()[channel] + cfg.gains()[channel] * v
    return np.maximum(lam, 0.0)


def gen_spikes(cfg: SynthConfig,
               trajectories: tuple[FingerTrajectory, FingerTrajectory] | None = None,
               ) -> list[SpikeTrain]:
    """Per-channel spike trains from Poisson thinning against lambda(t).

    Candidates arrive as an exponential stream at the channel's peak rate;
    candidate ``i`` consumes stream draws ``2i`` (gap) and ``2i+1``
    (accept test), so the output is independent of batching. Accepted
    times are fixed-point encoded; on the rare sub-resolution collision
    the later spike is nudged up one raw unit.
    """
    t_grid, v_index, v_thumb = velocity_grids(cfg)
    baselines = cfg.baselines()
    gains = cfg.gains()
    trains = []
    for c in range(cfg.channels):
        v = v_index if c % 2 == 0 else v_thumb
        lam_grid = np.maximum(baselines[c] + gains[c] * v, 0.0)
        trains.append(_thin_channel(cfg, c, t_grid, lam_grid))
    return trains


def _thin_channel(cfg: SynthConfig, channel: int, t_grid: np.ndarray,
                  lam_grid: np.ndarray) -> SpikeTrain:
    lam_max = float(lam_grid.max()) if lam_grid.size else 0.0
    if lam_max <= 0.0 or cfg.duration_s <= 0.0:
        return SpikeTrain(channel, raw=np.array([], dtype=np.uint64))
    rng = SplitMix64(substream_seed(cfg.seed, channel))
    # Expected candidates ~ lam_max * duration; draw in batches of 2x that.
    batch = max(int(2 * lam_max * cfg.duration_s) + 64, 128)
    times: list[float] = []
    t = 0.0
    done = False
    while not done:
        u = rng.floats(2 * batch)
        gaps = -np.log1p(-u[0::2]) / lam_max
        cand = t + np.cumsum(gaps)
        accept_u = u[1::2]
        over = np.searchsorted(cand, cfg.duration_s, side="left")
        if over < cand.size:
            done = True
            cand = cand[:over]
            accept_u = accept_u[:over]
        if cand.size:
            lam_at = np.interp(cand, t_grid, lam_grid)
            accepted = cand[accept_u * lam_max < lam_at]
            times.extend(accepted.tolist())
            t = float(cand[-1]) if not done else t
    if not times:
        return SpikeTrain(channel, raw=np.array([], dtype=np.uint64))
    # Quantize to the spike-CSV resolution (1 us; the recordings' own
    # timing precision is ~5 us) and nudge collisions up one unit so the
    # written file round-trips with strict per-channel monotonicity.
    micros = _dedupe_micros(np.round(np.asarray(times) * 1e6).astype(np.int64))
    micros = micros[micros < int(round(cfg.duration_s * 1e6))]
    return SpikeTrain(channel, raw=encode_raw_array(micros / 1e6))


def _dedupe_micros(us: np.ndarray) -> np.ndarray:
    if us.size < 2 or np.all(us[1:] > us[:-1]):
        return us
    out = us.copy()
    for i in range(1, out.size):
        if out[i] <= out[i - 1]:
            out[i] = out[i - 1] + 1
    return out


def cumulative_rate(cfg: SynthConfig, channel: int, times_s: np.ndarray) -> np.ndarray:
    """Exact integral of the (piecewise-linear) rate from 0 to each time.

    Used by the time-rescaling check: for a correct inhomogeneous Poisson
    sample, successive differences of this integral at the spike times are
    i.i.d. Exp(1).
    """
    t_grid = velocity_grids(cfg)[0]
    lam_grid = channel_rate_grid(cfg, channel)
    # Trapezoid integral of the linear interpolant at grid points.
    seg = 0.5 * (lam_grid[1:] + lam_grid[:-1]) * np.diff(t_grid)
    big_lambda = np.concatenate([[0.0], np.cumsum(seg)])
    idx = np.clip(np.searchsorted(t_grid, times_s, side="right") - 1, 0, t_grid.size - 2)
    frac = times_s - t_grid[idx]
    slope = (lam_grid[idx + 1] - lam_grid[idx]) / (t_grid[idx + 1] - t_grid[idx])
    out = big_lambda[idx] + lam_grid[idx] * frac + 0.5 * slope * frac * frac
    # Past the grid end the rate is clamped (matching np.interp in the sampler).
    tail = times_s > t_grid[-1]
    if np.any(tail):
        out[tail] = big_lambda[-1] + lam_grid[-1] * (times_s[tail] - t_grid[-1])
    return out
