"""FastAPI application wrapping the arm simulator and the core operations.

The app exposes three surfaces:

* ``/ws`` — the wire protocol verbatim over a WebSocket text channel
  (one protocol line per text frame), for the operator console.
* ``/api/...`` — a REST control plane: arm state, latency configuration,
  requested-vs-actual telemetry, sequence record/replay management, and
  job wrappers around dataset generation / fitting / replay / evaluation.
* ``/health`` — liveness.

The raw TCP listener (the pipeline's transport) and the real-time ticker
are started by the lifespan when the app is built with ``serve_tcp``;
tests build the app around a virtual-clock simulator and drive time
manually.
"""

from __future__ import annotations

import asyncio
from contextlib import asynccontextmanager

import anyio.to_thread
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from .. import netproto, ops, synth
from ..armsim import ArmConfig, ArmSimulator, MotionSequence
from ..decoder import FitConfig
from ..errors import (
    ConfigError,
    DataError,
    NeurochainError,
    ProtocolError,
    TransportError,
)
from ..netproto import Command
from ..server import ArmHost
from . import schemas


def create_app(sim: ArmSimulator | None = None, *, serve_tcp: bool = False,
               tcp_port: int = netproto.DEFAULT_TCP_PORT,
               run_ticker: bool = False) -> FastAPI:
    sim = sim if sim is not None else ArmSimulator(ArmConfig())
    host = ArmHost(sim, tcp_port=tcp_port)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        ticker_task = None
        if serve_tcp:
            await host.start()
        elif run_ticker:
            ticker_task = asyncio.create_task(host._tick_loop())
        try:
            yield
        finally:
            if ticker_task is not None:
                ticker_task.cancel()
            if serve_tcp:
                await host.stop()

    app = FastAPI(title="neurochain arm service", lifespan=lifespan)
    app.state.sim = sim
    app.state.host = host
    recording_name: dict[str, str | None] = {"name": None}

    def _http_error(exc: NeurochainError) -> HTTPException:
        if isinstance(exc, ProtocolError):
            return HTTPException(status_code=exc.code, detail=exc.text)
        if isinstance(exc, ConfigError):
            return HTTPException(status_code=400, detail=str(exc))
        if isinstance(exc, DataError):
            return HTTPException(status_code=422, detail=str(exc))
        if isinstance(exc, TransportError):
            return HTTPException(status_code=502, detail=str(exc))
        return HTTPException(status_code=500, detail=str(exc))

    # -- liveness / state ---------------------------------------------------

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", t_ms=sim.t_ms(),
                                      connections=host.connections)

    @app.get("/api/state", response_model=schemas.ArmStateResponse)
    def state() -> schemas.ArmStateResponse:
        snap = sim.snapshot()
        return schemas.ArmStateResponse(
            t_ms=snap.t_ms, index_mm=snap.index_mm, thumb_mm=snap.thumb_mm,
            aperture_mm=snap.aperture_mm, pos_m=snap.pos_m, mode=snap.mode,
            speed_setting=snap.speed_setting, action_setting=snap.action_setting,
            powered=snap.powered, replay_active=sim.replay_active,
            recording=sim.recording)

    @app.get("/api/latency", response_model=schemas.LatencyResponse)
    def get_latency() -> schemas.LatencyResponse:
        return schemas.LatencyResponse(
            command_ms=sim.cmd_queue.latency_s * 1000.0,
            feedback_ms=sim.fb_queue.latency_s * 1000.0)

    @app.post("/api/latency", response_model=schemas.LatencyResponse)
    def set_latency(cfg: schemas.LatencyConfig) -> schemas.LatencyResponse:
        sim.set_latency(
            command_s=None if cfg.command_ms is None else cfg.command_ms / 1000.0,
            feedback_s=None if cfg.feedback_ms is None else cfg.feedback_ms / 1000.0)
        return get_latency()

    @app.get("/api/trace", response_model=schemas.TraceResponse)
    def trace(since_ms: int = -1, limit: int = 10000) -> schemas.TraceResponse:
        rows = sim.telemetry_rows(since_ms)[-limit:]
        return schemas.TraceResponse(rows=[
            schemas.TraceRow(t_ms=t, requested_mm=r, actual_mm=a)
            for t, r, a in rows])

    # -- sequences ------------------------------------------------------------

    def _sequence_info(name: str, seq: MotionSequence) -> schemas.SequenceInfo:
        return schemas.SequenceInfo(name=name, steps=[
            schemas.SequenceStep(name=cmd.name, speed=cmd.speed,
                                 duration=cmd.duration, offset_ms=offset)
            for cmd, offset in seq.steps])

    @app.get("/api/sequences", response_model=schemas.SequenceListResponse)
    def sequences() -> schemas.SequenceListResponse:
        return schemas.SequenceListResponse(
            sequences=[_sequence_info(n, s) for n, s in sorted(sim.sequences.items())],
            recording=recording_name["name"])

    @app.post("/api/sequences/record", response_model=schemas.OkResponse)
    def record_start(req: schemas.RecordStartRequest) -> schemas.OkResponse:
        if sim.recording:
            raise HTTPException(status_code=409, detail="already recording")
        if req.name in sim.sequences:
            raise HTTPException(status_code=409,
                                detail=f"sequence {req.name!r} already exists")
        recording_name["name"] = req.name
        sim.start_recording()
        return schemas.OkResponse(detail=f"recording {req.name!r}")

    @app.post("/api/sequences/record/stop", response_model=schemas.SequenceInfo)
    def record_stop() -> schemas.SequenceInfo:
        name = recording_name["name"]
        if name is None or not sim.recording:
            raise HTTPException(status_code=409, detail="not recording")
        try:
            seq = sim.stop_recording()
        except ProtocolError as exc:
            raise _http_error(exc) from None
        recording_name["name"] = None
        sim.sequences[name] = seq
        return _sequence_info(name, seq)

    @app.post("/api/sequences/{name}/replay", response_model=schemas.OkResponse)
    def replay(name: str) -> schemas.OkResponse:
        seq = sim.sequences.get(name)
        if seq is None:
            raise HTTPException(status_code=404, detail=f"no sequence {name!r}")
        try:
            sim.replay(seq)
        except ProtocolError as exc:
            raise _http_error(exc) from None
        return schemas.OkResponse(detail=f"replaying {name!r}")

    @app.post("/api/sequences/{name}/rename", response_model=schemas.OkResponse)
    def rename(name: str, req: schemas.RenameRequest) -> schemas.OkResponse:
        if name not in sim.sequences:
            raise HTTPException(status_code=404, detail=f"no sequence {name!r}")
        if req.new_name in sim.sequences:
            raise HTTPException(status_code=409,
                                detail=f"sequence {req.new_name!r} already exists")
        sim.sequences[req.new_name] = sim.sequences.pop(name)
        return schemas.OkResponse(detail=f"renamed to {req.new_name!r}")

    @app.delete("/api/sequences/{name}", response_model=schemas.OkResponse)
    def delete(name: str) -> schemas.OkResponse:
        if name not in sim.sequences:
            raise HTTPException(status_code=404, detail=f"no sequence {name!r}")
        del sim.sequences[name]
        return schemas.OkResponse(detail=f"deleted {name!r}")

    # -- jobs -------------------------------------------------------------------

    @app.post("/api/jobs/gen", response_model=schemas.JobResponse)
    async def job_gen(req: schemas.GenRequest) -> schemas.JobResponse:
        cfg = synth.SynthConfig(
            seed=req.seed, channels=req.channels, duration_s=req.duration_s,
            profile=synth.GripProfile(events_per_minute=req.events_per_minute,
                                      amplitude_mm=req.amplitude_mm),
            noise_mm=req.noise_mm)
        try:
            report = await anyio.to_thread.run_sync(
                lambda: ops.generate_dataset(req.out_dir, cfg))
        except NeurochainError as exc:
            raise _http_error(exc) from None
        return schemas.JobResponse(report=report)

    @app.post("/api/jobs/fit", response_model=schemas.JobResponse)
    async def job_fit(req: schemas.FitRequest) -> schemas.JobResponse:
        cfg = FitConfig(bin_width_s=req.bin_width_ms / 1000.0,
                        smoothing_depth=req.smoothing_depth,
                        pair_count=req.pair_count, ridge=req.ridge,
                        percentile_q=req.threshold_percentile)
        try:
            report = await anyio.to_thread.run_sync(
                lambda: ops.fit_finger(req.spikes_csv, req.positions_csv,
                                       req.finger, req.params_out, cfg,
                                       req.train_fraction))
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except NeurochainError as exc:
            raise _http_error(exc) from None
        return schemas.JobResponse(report=report)

    @app.post("/api/jobs/replay", response_model=schemas.JobResponse)
    async def job_replay(req: schemas.ReplayJobRequest) -> schemas.JobResponse:
        try:
            report = await anyio.to_thread.run_sync(
                lambda: ops.replay_scenario(req.scenario, addr=req.addr,
                                            virtual_clock=req.virtual_clock,
                                            out_dir=req.out_dir))
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except NeurochainError as exc:
            raise _http_error(exc) from None
        return schemas.JobResponse(report=report)

    @app.post("/api/jobs/eval", response_model=schemas.JobResponse)
    async def job_eval(req: schemas.EvalRequest) -> schemas.JobResponse:
        try:
            report = await anyio.to_thread.run_sync(
                lambda: ops.eval_trace(req.trace_csv, req.oscillation_window_s))
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except NeurochainError as exc:
            raise _http_error(exc) from None
        return schemas.JobResponse(report=report)

    # -- WebSocket text channel ----------------------------------------------

    @app.websocket("/ws")
    async def ws_channel(ws: WebSocket) -> None:
        await ws.accept()
        try:
            while True:
                text = await ws.receive_text()
                for line in text.splitlines():
                    if not line.strip():
                        continue
                    reply = host.handle_line(line.encode("utf-8", "replace"))
                    await ws.send_text(reply.decode("ascii"))
        except WebSocketDisconnect:
            pass

    return app


def console_command(name: str, speed: str, duration: str, seq: int) -> Command:
    """Convenience for tests mirroring what the console sends."""
    return Command(seq=seq, name=name, speed=speed, duration=duration)
