"""Pydantic request/response models for the REST control plane."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    t_ms: int
    connections: int


class ArmStateResponse(BaseModel):
    t_ms: int
    index_mm: float
    thumb_mm: float
    aperture_mm: float
    pos_m: tuple[float, float, float]
    mode: str
    speed_setting: str
    action_setting: str
    powered: bool
    replay_active: bool
    recording: bool


class LatencyConfig(BaseModel):
    command_ms: float | None = Field(default=None, ge=0)
    feedback_ms: float | None = Field(default=None, ge=0)


class LatencyResponse(BaseModel):
    command_ms: float
    feedback_ms: float


class TraceRow(BaseModel):
    t_ms: int
    requested_mm: float
    actual_mm: float


class TraceResponse(BaseModel):
    rows: list[TraceRow]


class SequenceStep(BaseModel):
    name: str
    speed: str
    duration: str
    offset_ms: int


class SequenceInfo(BaseModel):
    name: str
    steps: list[SequenceStep]


class SequenceListResponse(BaseModel):
    sequences: list[SequenceInfo]
    recording: str | None


class RecordStartRequest(BaseModel):
    name: str = Field(min_length=1, max_length=64)


class RenameRequest(BaseModel):
    new_name: str = Field(min_length=1, max_length=64)


class OkResponse(BaseModel):
    ok: bool = True
    detail: str = ""


class GenRequest(BaseModel):
    out_dir: str
    seed: int = 1
    channels: int = 33
    duration_s: float = Field(default=60.0, ge=0)
    events_per_minute: float = 6.0
    amplitude_mm: float = 10.0
    noise_mm: float = 0.0


class FitRequest(BaseModel):
    spikes_csv: str
    positions_csv: str
    finger: str = "index"
    params_out: str | None = None
    ridge: float = Field(default=1000.0, ge=0)
    train_fraction: float = Field(default=0.8, gt=0, le=1)
    bin_width_ms: float = Field(default=100.0, gt=0)
    smoothing_depth: int = Field(default=10, ge=1)
    pair_count: int = Field(default=32, ge=0)
    threshold_percentile: float = Field(default=20.0, ge=0, le=100)


class ReplayJobRequest(BaseModel):
    scenario: str
    out_dir: str = "."
    addr: str | None = None
    virtual_clock: bool = True


class EvalRequest(BaseModel):
    trace_csv: str
    oscillation_window_s: float = Field(default=2.0, gt=0)


class JobResponse(BaseModel):
    report: dict
