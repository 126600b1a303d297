"""High-level operations shared by the CLI and the REST service: dataset
generation, decoder fitting with a train/test split, scenario replay, and
trace evaluation."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import controller, decoder, pipeline, synth
from .armsim import ArmConfig, ArmSimulator
from .clock import MonotonicClock
from .errors import ConfigError, DataError, MetricError
from .signals import FingerTrajectory
from .spikes import (
    group_into_trains,
    read_position_csv,
    read_spike_csv,
    write_position_csv,
    write_spike_csv,
)

SPIKES_FILE = "spikes.csv"
POSITIONS_FILE = "positions.csv"
MANIFEST_FILE = "manifest.json"


def generate_dataset(out_dir: str | Path, cfg: synth.SynthConfig) -> dict:
    """Run the synthesizer and write spike CSV, position CSV, and a
    manifest carrying the seed; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index, thumb = synth.gen_trajectories(cfg)
    trains = synth.gen_spikes(cfg)
    spike_path = out / SPIKES_FILE
    pos_path = out / POSITIONS_FILE
    with open(spike_path, "w") as fh:
        spike_rows = write_spike_csv(fh, trains)
    with open(pos_path, "w") as fh:
        pos_rows = write_position_csv(fh, index.positions_mm, thumb.positions_mm)
    manifest = {
        "seed": cfg.seed,
        "channels": cfg.channels,
        "duration_s": cfg.duration_s,
        "spike_rows": spike_rows,
        "position_rows": pos_rows,
        "files": {"spikes": str(spike_path), "positions": str(pos_path)},
    }
    with open(out / MANIFEST_FILE, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def fit_finger(spikes_csv: str | Path, positions_csv: str | Path, finger: str,
               params_out: str | Path | None = None,
               config: decoder.FitConfig | None = None,
               train_fraction: float = 0.8) -> dict:
    """Fit one finger's decoder on the leading train split and report
    teacher-forced train RMSE plus free-running test RMSE/correlation."""
    if finger not in ("index", "thumb"):
        raise ConfigError(f"finger must be index or thumb, not {finger!r}")
    if not 0.1 <= train_fraction <= 1.0:
        raise ConfigError("train fraction must be in [0.1, 1.0]")
    config = config or decoder.FitConfig()
    with open(spikes_csv) as fh:
        csv = read_spike_csv(fh)
    trains = group_into_trains(csv)
    with open(positions_csv) as fh:
        start_s, index_mm, thumb_mm = read_position_csv(fh)
    positions = index_mm if finger == "index" else thumb_mm
    if positions.size == 0:
        raise DataError("position CSV is empty")
    target = FingerTrajectory(start_s=start_s, positions_mm=positions)

    n = len(target)
    split = int(n * train_fraction)
    params, fit_report = decoder.fit(trains, target.slice(0, split), config)

    report = {
        "finger": finger,
        "channels": len(trains),
        "train_samples": fit_report.samples,
        "features": fit_report.features,
        "train_rmse_mm": fit_report.train_rmse_mm,
        "ridge": config.ridge,
    }
    if split < n - 2:
        test = target.slice(split, n)
        pred = decoder.free_run(trains, params, y0_mm=float(positions[split]),
                                n_samples=n - split, start_s=target.time_at(split))
        report["test_rmse_mm"] = float(
            np.sqrt(np.mean((pred.positions_mm - test.positions_mm) ** 2)))
        try:
            report["test_correlation"] = decoder.evaluate(pred, test).correlation
        except MetricError:
            # A flat held-out segment has no variance; RMSE still reported.
            report["test_correlation"] = None
    if params_out is not None:
        with open(params_out, "w") as fh:
            decoder.save_params(fh, params)
        report["params_file"] = str(params_out)
    return report


def replay_scenario(scenario_path: str | Path, *, addr: str | None = None,
                    virtual_clock: bool = True, out_dir: str | Path = ".",
                    chunk_s: float = pipeline.DEFAULT_CHUNK_S,
                    arm_config: ArmConfig | None = None) -> dict:
    """Run a scenario and collect its traces.

    Without ``addr`` any NetClient boxes talk to an in-process arm
    simulator hosted for the run (message passing, no sockets), whose
    requested-vs-actual telemetry is written as ``arm_trace.csv``. The
    final-adder output is captured as ``aperture.csv``.
    """
    scenario_path = Path(scenario_path)
    graph = pipeline.load_scenario(scenario_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    engine = None
    if addr is None and graph.boxes_of_kind("NetClient"):
        engine = ArmSimulator(arm_config or ArmConfig())

    adders = graph.boxes_of_kind("Adder")
    collect = [(adders[0].id, "out")] if adders else []

    report = pipeline.run(
        graph,
        clock=None if virtual_clock else MonotonicClock(),
        chunk_s=chunk_s,
        base_dir=scenario_path.parent,
        engine=engine,
        net_addr=addr,
        collect=collect,
    )

    files = list(report.trace_files)
    if collect and report.collected:
        samples = report.collected[collect[0]]
        aperture_path = out / "aperture.csv"
        with open(aperture_path, "w") as fh:
            fh.write("t_ms,aperture_mm\n")
            period_ms = 1000.0 * pipeline.SAMPLE_PERIOD_S
            for k in range(samples.size):
                fh.write(f"{int(round(k * period_ms))},{samples[k]:.3f}\n")
        files.append(str(aperture_path))
    if engine is not None:
        arm_path = out / "arm_trace.csv"
        with open(arm_path, "w") as fh:
            controller.write_arm_trace_csv(fh, engine.telemetry_rows())
        files.append(str(arm_path))

    return {
        "ticks": report.ticks,
        "duration_s": report.duration_s,
        "wall_s": report.wall_s,
        "printer_lines": report.printer_lines,
        "net_sent": report.net_sent,
        "net_dropped": report.net_dropped,
        "samples": {k: list(v) for k, v in report.samples.items()},
        "files": files,
    }


def eval_trace(trace_csv: str | Path, oscillation_window_s: float = 2.0) -> dict:
    """Lag, RMSE, and oscillation statistics of a requested-vs-actual trace."""
    with open(trace_csv) as fh:
        t_ms, requested, actual, _cmd = controller.read_trace_csv(fh)
    if t_ms.size < 2:
        raise DataError("trace too short")
    period_ms = float(np.median(np.diff(t_ms)))
    if not math.isfinite(period_ms) or period_ms <= 0:
        raise DataError("trace timestamps are not increasing")
    lag = controller.measure_lag(requested, actual, period_ms)
    osc = controller.detect_oscillation(t_ms, requested, actual,
                                        window_s=oscillation_window_s)
    rmse = float(np.sqrt(np.mean((requested - actual) ** 2)))
    return {
        "rows": int(t_ms.size),
        "period_ms": period_ms,
        "lag_ms": lag.lag_ms,
        "lag_peak_correlation": lag.peak_correlation,
        "lag_confident": lag.confident,
        "rmse_mm": rmse,
        "sign_changes": osc.sign_changes,
        "peak_amplitude_mm": osc.peak_amplitude_mm,
        "decay_ratio": osc.decay_ratio,
    }


def format_report(report: dict, prefix: str = "") -> str:
    """Flat ``key = value`` lines for grep-friendly machine reading."""
    lines = []
    for key, value in report.items():
        if isinstance(value, dict):
            lines.append(format_report(value, prefix=f"{prefix}{key}."))
        elif isinstance(value, list):
            lines.append(f"{prefix}{key} = {json.dumps(value)}")
        else:
            lines.append(f"{prefix}{key} = {value}")
    return "\n".join(lines)
