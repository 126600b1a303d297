"""Per-finger forecasting: position change per 2 ms output step as an
affine function of rectified thresholded firing rates, pairwise synchrony,
and the averaged variation of recent positions.

The model for one output step is::

    dy = sum_i w[i] * max(0, r_i - theta_i)
       + sum_jk v[jk] * s_jk
       + h * ybar'
       + b

where ``r_i`` is channel i's firing rate over the trailing ``bin_width``
window, ``s_jk`` the synchrony of a configured channel-pair set over the
same window, and ``ybar' = (y[k-1] - y[k-M-1]) / M`` the mean one-step
position variation over the last ``M`` output samples. Fitting fixes the
thresholds first (a per-channel rate percentile, keeping the problem
linear), then solves a ridge-regularized least-squares problem on
teacher-forced features; replay runs free, integrating the model's own
predictions inside a position clamp.

Feature evaluation order is pinned (rates, then pairs in configured order,
then history, then bias) so identical inputs reproduce bit-identical
trajectories.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Sequence, TextIO

import numpy as np

from .errors import ConfigError, DataError, MetricError, SingularFitError
from .signals import SAMPLE_RATE_HZ, FingerTrajectory
from .spikes import SpikeTrain, firing_rate_series, synchrony_series

PARAMS_HEADER = "neurochain-params v1"

DEFAULT_BIN_WIDTH_S = 0.100
DEFAULT_SYNC_DELTA_S = 0.002
DEFAULT_SMOOTHING_DEPTH = 10
DEFAULT_PAIR_COUNT = 32
DEFAULT_CLAMP_MM = (0.0, 20.0)


@dataclass(frozen=True)
class DecoderParams:
    """Fitted model for one finger."""

    weights: np.ndarray                  # mm per Hz, one per channel
    thresholds: np.ndarray               # Hz, one per channel
    pairs: tuple[tuple[int, int], ...]   # synchrony pair set, fixed order
    sync_weights: np.ndarray             # mm per unit synchrony, one per pair
    history_weight: float                # dimensionless
    bias: float                          # mm per output step
    smoothing_depth: int = DEFAULT_SMOOTHING_DEPTH
    bin_width_s: float = DEFAULT_BIN_WIDTH_S
    sync_delta_s: float = DEFAULT_SYNC_DELTA_S
    clamp_mm: tuple[float, float] = DEFAULT_CLAMP_MM
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        th = np.asarray(self.thresholds, dtype=np.float64)
        sv = np.asarray(self.sync_weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "sync_weights", sv)
        if w.shape != th.shape:
            raise ConfigError("weights and thresholds must have equal length")
        if sv.size != len(self.pairs):
            raise ConfigError("one synchrony weight per pair required")
        for j, k in self.pairs:
            if not (0 <= j < w.size and 0 <= k < w.size and j != k):
                raise ConfigError(f"invalid synchrony pair ({j}, {k})")
        if self.smoothing_depth < 1:
            raise ConfigError("smoothing depth must be >= 1")
        if self.bin_width_s <= 0:
            raise ConfigError("bin width must be positive")
        if self.clamp_mm[0] >= self.clamp_mm[1]:
            raise ConfigError("clamp range is empty")

    @property
    def channel_count(self) -> int:
        return int(self.weights.size)

    @property
    def period_s(self) -> float:
        return 1.0 / self.sample_rate_hz

    def warmup_samples(self) -> int:
        """Samples to emit unchanged before the model has enough history."""
        return max(int(math.ceil(self.bin_width_s * self.sample_rate_hz)),
                   self.smoothing_depth + 1)


@dataclass(frozen=True)
class FeatureVector:
    """Model inputs at one output sample (bias constant implied)."""

    rates: np.ndarray        # rectified: max(0, r_i - theta_i)
    sync: np.ndarray
    history_variation: float

    def __post_init__(self):
        if np.any(self.rates < 0):
            raise DataError("rectified rates must be non-negative")
        if not (np.all(np.isfinite(self.rates)) and np.all(np.isfinite(self.sync))
                and math.isfinite(self.history_variation)):
            raise DataError("feature vector contains non-finite values")


class DecoderState:
    """Free-running integration state: current position plus the ring of
    the last M+1 emitted positions."""

    __slots__ = ("y_mm", "ring")

    def __init__(self, y0_mm: float, smoothing_depth: int):
        self.y_mm = float(y0_mm)
        self.ring = [float(y0_mm)] * (smoothing_depth + 1)

    def history_variation(self) -> float:
        m = len(self.ring) - 1
        return (self.ring[-1] - self.ring[0]) / m

    def push(self, y_mm: float) -> None:
        self.ring.pop(0)
        self.ring.append(float(y_mm))


def history_variation(past_positions: Sequence[float]) -> float:
    """Mean one-step variation over the last M steps, from the last M+1
    position samples (oldest first)."""
    p = np.asarray(past_positions, dtype=np.float64)
    if p.size < 2:
        raise DataError("need at least two past positions")
    return float((p[-1] - p[0]) / (p.size - 1))


def features(trains: Sequence[SpikeTrain], t_s: float,
             past_positions: Sequence[float], params: DecoderParams) -> FeatureVector:
    """Feature vector at time ``t`` from spike history and the last M+1
    position samples (oldest first)."""
    if len(trains) != params.channel_count:
        raise ConfigError(f"decoder fitted for {params.channel_count} channels, "
                          f"stream has {len(trains)}")
    grid = np.array([t_s])
    rates = np.array([firing_rate_series(tr, grid, params.bin_width_s)[0]
                      for tr in trains])
    rect = np.maximum(rates - params.thresholds, 0.0)
    sync = np.array([synchrony_series(trains[j], trains[k], grid,
                                      params.bin_width_s, params.sync_delta_s)[0]
                     for j, k in params.pairs])
    return FeatureVector(rates=rect, sync=sync,
                         history_variation=history_variation(past_positions))


def predict_delta(params: DecoderParams, f: FeatureVector) -> float:
    """One-step position change in mm."""
    if f.rates.size != params.channel_count or f.sync.size != len(params.pairs):
        raise ConfigError("feature vector dimensions do not match params")
    return float(params.weights @ f.rates
                 + params.sync_weights @ f.sync
                 + params.history_weight * f.history_variation
                 + params.bias)


def step(state: DecoderState, params: DecoderParams, f: FeatureVector) -> float:
    """Advance the free-running state by one sample; returns the new position."""
    lo, hi = params.clamp_mm
    y_new = min(max(state.y_mm + predict_delta(params, f), lo), hi)
    state.push(y_new)
    state.y_mm = y_new
    return y_new


def aperture(index_mm: float, thumb_mm: float) -> float:
    """Finger distance driven to the arm: the two positions added together."""
    return index_mm + thumb_mm


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    """Fitting knobs.

    The default ridge is deliberately large: the history-variation column
    is a near-perfect one-step predictor of a smooth 500 Hz signal, so an
    unregularized fit puts all weight there and the free-running replay
    (integrating its own momentum) diverges. A strong ridge costs the
    dimensionless history weight far more than the tiny per-Hz rate
    weights and pushes the model onto the spike features.
    """

    bin_width_s: float = DEFAULT_BIN_WIDTH_S
    sync_delta_s: float = DEFAULT_SYNC_DELTA_S
    smoothing_depth: int = DEFAULT_SMOOTHING_DEPTH
    pair_count: int = DEFAULT_PAIR_COUNT
    pairs: tuple[tuple[int, int], ...] | None = None  # overrides pair_count
    ridge: float = 1000.0
    threshold_rule: str = "percentile"   # "percentile" | "zero"
    percentile_q: float = 20.0
    clamp_mm: tuple[float, float] = DEFAULT_CLAMP_MM

    def __post_init__(self):
        if self.ridge < 0:
            raise ConfigError("ridge strength must be >= 0")
        if self.threshold_rule not in ("percentile", "zero"):
            raise ConfigError(f"unknown threshold rule {self.threshold_rule!r}")


@dataclass(frozen=True)
class FitReport:
    train_rmse_mm: float
    residual_orthogonality: float   # max |X^T r - lambda*D*beta| / scale
    samples: int
    features: int


def choose_pairs(trains: Sequence[SpikeTrain], t0_s: float, t1_s: float,
                 count: int) -> tuple[tuple[int, int], ...]:
    """Pick the synchrony pair set: all pairs (j < k) ranked by combined
    spike count over the interval, ties broken lexicographically."""
    counts = [tr.count_in(t0_s, t1_s) for tr in trains]
    ranked = sorted(((j, k) for j in range(len(trains)) for k in range(j + 1, len(trains))),
                    key=lambda jk: (-(counts[jk[0]] + counts[jk[1]]), jk))
    return tuple(ranked[:count])


def percentile_thresholds(trains: Sequence[SpikeTrain], t0_s: float, t1_s: float,
                          bin_width_s: float, q: float) -> np.ndarray:
    """Per-channel q-th percentile of binned rates over the interval."""
    from .spikes import bin_counts
    out = np.empty(len(trains))
    for i, tr in enumerate(trains):
        rates = bin_counts(tr, t0_s, t1_s, bin_width_s) / bin_width_s
        out[i] = np.percentile(rates, q)
    return out


def _grid_times(k: np.ndarray | int, period_s: float) -> np.ndarray | float:
    return k * period_s


def design_matrix(trains: Sequence[SpikeTrain], target: FingerTrajectory,
                  params: DecoderParams, k_range: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Teacher-forced design matrix and step targets for samples
    ``k in [k0, k1)``: columns are rectified rates, synchrony, the history
    variation from true past positions, and the bias constant."""
    k0, k1 = k_range
    ks = np.arange(k0, k1)
    grid = _grid_times(ks.astype(np.float64), params.period_s) + target.start_s
    y = target.positions_mm
    m = params.smoothing_depth
    cols: list[np.ndarray] = []
    for i, tr in enumerate(trains):
        rates = firing_rate_series(tr, grid, params.bin_width_s)
        cols.append(np.maximum(rates - params.thresholds[i], 0.0))
    for j, k in params.pairs:
        cols.append(synchrony_series(trains[j], trains[k], grid,
                                     params.bin_width_s, params.sync_delta_s))
    cols.append((y[ks - 1] - y[ks - m - 1]) / m)
    cols.append(np.ones(ks.size))
    X = np.column_stack(cols)
    dy = y[ks] - y[ks - 1]
    return X, dy


def fit(trains: Sequence[SpikeTrain], target: FingerTrajectory, config: FitConfig,
        ) -> tuple[DecoderParams, FitReport]:
    """Fit one finger's decoder on a common interval of spikes and positions.

    Thresholds come from the configured rule; the linear coefficients
    minimize the ridge objective with the bias left unregularized. With
    ridge 0 a rank-deficient design raises :class:`SingularFitError`.
    """
    n = len(target)
    duration = n * target.period_s
    if duration < 10.0:
        raise DataError(f"need >= 10 s of training data, got {duration:.2f} s")
    t0, t1 = target.start_s, target.start_s + duration

    if config.pairs is not None:
        pairs = config.pairs
    else:
        pairs = choose_pairs(trains, t0, t1, config.pair_count)
    if config.threshold_rule == "zero":
        thresholds = np.zeros(len(trains))
    else:
        thresholds = percentile_thresholds(trains, t0, t1, config.bin_width_s,
                                           config.percentile_q)

    params = DecoderParams(
        weights=np.zeros(len(trains)), thresholds=thresholds, pairs=pairs,
        sync_weights=np.zeros(len(pairs)), history_weight=0.0, bias=0.0,
        smoothing_depth=config.smoothing_depth, bin_width_s=config.bin_width_s,
        sync_delta_s=config.sync_delta_s, clamp_mm=config.clamp_mm)

    k0 = params.warmup_samples()
    if k0 + 16 >= n:
        raise DataError("training interval too short after warm-up")

    X, dy = design_matrix(trains, target, params, (k0, n))
    ncols = X.shape[1]
    penalty = np.ones(ncols)
    penalty[-1] = 0.0   # bias unregularized

    if config.ridge == 0.0:
        beta, _, rank, _ = np.linalg.lstsq(X, dy, rcond=None)
        if rank < ncols:
            raise SingularFitError(
                "design matrix is rank-deficient; re-run with ridge > 0")
    else:
        a = X.T @ X + config.ridge * np.diag(penalty)
        b = X.T @ dy
        try:
            beta = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise SingularFitError(
                f"normal equations are singular ({exc}); increase ridge") from None

    c = len(trains)
    p = len(pairs)
    fitted = replace(params,
                     weights=beta[:c],
                     sync_weights=beta[c:c + p],
                     history_weight=float(beta[c + p]),
                     bias=float(beta[c + p + 1]))

    resid = dy - X @ beta
    grad = X.T @ resid - config.ridge * penalty * beta
    # Gradient magnitude relative to the problem scale (not the residual
    # scale, which vanishes for an exact fit).
    scale = max(float(np.linalg.norm(X, ord="fro") * np.linalg.norm(dy)), 1e-30)
    report = FitReport(
        train_rmse_mm=float(np.sqrt(np.mean(resid ** 2))),
        residual_orthogonality=float(np.max(np.abs(grad)) / scale),
        samples=int(X.shape[0]),
        features=ncols,
    )
    return fitted, report


# ---------------------------------------------------------------------------
# Free-running replay
# ---------------------------------------------------------------------------

def free_run(trains: Sequence[SpikeTrain], params: DecoderParams, y0_mm: float,
             n_samples: int, start_s: float = 0.0) -> FingerTrajectory:
    """Run the decoder open loop for ``n_samples`` at the output rate.

    The warm-up prefix emits ``y0`` unchanged; afterwards each sample
    integrates the model's own prediction. Evaluation order is fixed, so
    the result is bit-identical across runs.
    """
    if len(trains) != params.channel_count:
        raise ConfigError(f"decoder fitted for {params.channel_count} channels, "
                          f"stream has {len(trains)}")
    period = params.period_s
    ks = np.arange(n_samples, dtype=np.float64)
    grid = start_s + ks * period
    rect = np.empty((n_samples, params.channel_count))
    for i, tr in enumerate(trains):
        rect[:, i] = np.maximum(
            firing_rate_series(tr, grid, params.bin_width_s) - params.thresholds[i], 0.0)
    sync = np.empty((n_samples, len(params.pairs)))
    for pi, (j, k) in enumerate(params.pairs):
        sync[:, pi] = synchrony_series(trains[j], trains[k], grid,
                                       params.bin_width_s, params.sync_delta_s)

    warm = params.warmup_samples()
    out = np.empty(n_samples)
    state = DecoderState(y0_mm, params.smoothing_depth)
    lo, hi = params.clamp_mm
    w, sw, h, b = params.weights, params.sync_weights, params.history_weight, params.bias
    for k in range(n_samples):
        if k < warm:
            out[k] = state.y_mm
            state.push(state.y_mm)
            continue
        dy = float(w @ rect[k] + sw @ sync[k] + h * state.history_variation() + b)
        y_new = min(max(state.y_mm + dy, lo), hi)
        state.push(y_new)
        state.y_mm = y_new
        out[k] = y_new
    return FingerTrajectory(start_s=start_s, positions_mm=out, period_s=period)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryMetrics:
    rmse_mm: float
    correlation: float


def evaluate(predicted: FingerTrajectory, actual: FingerTrajectory) -> TrajectoryMetrics:
    """RMSE and Pearson correlation between two equal-length trajectories."""
    p = predicted.positions_mm
    a = actual.positions_mm
    if p.size != a.size:
        raise DataError("trajectories differ in length")
    if p.size < 2:
        raise DataError("need at least two samples")
    if abs(predicted.period_s - actual.period_s) > 1e-12:
        raise DataError("trajectories differ in sampling period")
    rmse = float(np.sqrt(np.mean((p - a) ** 2)))
    sp = p - p.mean()
    sa = a - a.mean()
    denom = float(np.sqrt((sp ** 2).sum() * (sa ** 2).sum()))
    if denom == 0.0:
        raise MetricError("correlation undefined for zero-variance input")
    return TrajectoryMetrics(rmse_mm=rmse, correlation=float((sp @ sa) / denom))


# ---------------------------------------------------------------------------
# Params persistence (flat text, full decimal precision)
# ---------------------------------------------------------------------------

def save_params(stream: TextIO, params: DecoderParams) -> None:
    w = stream.write
    w(PARAMS_HEADER + "\n")
    w(f"channels = {params.channel_count}\n")
    w(f"bin_width_s = {params.bin_width_s!r}\n")
    w(f"sync_delta_s = {params.sync_delta_s!r}\n")
    w(f"smoothing_depth = {params.smoothing_depth}\n")
    w(f"sample_rate_hz = {params.sample_rate_hz!r}\n")
    w(f"clamp_mm = {params.clamp_mm[0]!r} {params.clamp_mm[1]!r}\n")
    w(f"bias = {params.bias!r}\n")
    w(f"history_weight = {params.history_weight!r}\n")
    w("weights = " + " ".join(repr(float(x)) for x in params.weights) + "\n")
    w("thresholds = " + " ".join(repr(float(x)) for x in params.thresholds) + "\n")
    w("pairs = " + " ".join(f"{j}:{k}" for j, k in params.pairs) + "\n")
    w("sync_weights = " + " ".join(repr(float(x)) for x in params.sync_weights) + "\n")


def load_params(stream: TextIO, *, expected_channels: int | None = None) -> DecoderParams:
    header = stream.readline().strip()
    if header != PARAMS_HEADER:
        raise ConfigError(f"not a params file (header {header!r})")
    kv: dict[str, str] = {}
    for line in stream:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"malformed params line {line!r}")
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    try:
        channels = int(kv["channels"])
        pairs = tuple(tuple(int(x) for x in p.split(":"))
                      for p in kv["pairs"].split()) if kv.get("pairs") else ()
        clamp = tuple(float(x) for x in kv["clamp_mm"].split())
        params = DecoderParams(
            weights=np.array([float(x) for x in kv["weights"].split()]),
            thresholds=np.array([float(x) for x in kv["thresholds"].split()]),
            pairs=pairs,  # type: ignore[arg-type]
            sync_weights=np.array([float(x) for x in kv["sync_weights"].split()]
                                  if kv.get("sync_weights") else []),
            history_weight=float(kv["history_weight"]),
            bias=float(kv["bias"]),
            smoothing_depth=int(kv["smoothing_depth"]),
            bin_width_s=float(kv["bin_width_s"]),
            sync_delta_s=float(kv["sync_delta_s"]),
            clamp_mm=(clamp[0], clamp[1]),
            sample_rate_hz=float(kv["sample_rate_hz"]),
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid params file: {exc}") from None
    if params.channel_count != channels:
        raise ConfigError("params file channel count disagrees with weights")
    if expected_channels is not None and channels != expected_channels:
        raise ConfigError(f"params fitted for {channels} channels, "
                          f"stream has {expected_channels}")
    return params


def params_to_text(params: DecoderParams) -> str:
    buf = io.StringIO()
    save_params(buf, params)
    return buf.getvalue()
