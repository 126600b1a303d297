"""REST control plane and WebSocket text channel."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from neurochain import ops, synth
from neurochain.armsim import ArmConfig, ArmSimulator
from neurochain.service import create_app


@pytest.fixture()
def sim():
    return ArmSimulator(ArmConfig(command_latency_s=0.0, feedback_latency_s=0.0))


@pytest.fixture()
def client(sim):
    app = create_app(sim)
    with TestClient(app) as tc:
        yield tc, sim


def test_health(client):
    tc, _ = client
    body = tc.get("/health").json()
    assert body["status"] == "ok"


def test_state_snapshot(client):
    tc, _ = client
    body = tc.get("/api/state").json()
    assert body["mode"] == "Hand"
    assert body["powered"] is True
    assert body["aperture_mm"] == pytest.approx(4.0)
    assert body["pos_m"] == [0.0, 0.0, 0.0]


def test_latency_roundtrip(client):
    tc, sim = client
    body = tc.post("/api/latency", json={"command_ms": 75.0, "feedback_ms": 30.0}).json()
    assert body == {"command_ms": 75.0, "feedback_ms": 30.0}
    assert sim.cmd_queue.latency_s == pytest.approx(0.075)
    assert tc.get("/api/latency").json()["feedback_ms"] == 30.0
    assert tc.post("/api/latency", json={"command_ms": -5}).status_code == 422


def test_trace_endpoint(client):
    tc, sim = client
    sim.advance(0.05)
    rows = tc.get("/api/trace").json()["rows"]
    assert len(rows) == 25
    assert rows[0]["t_ms"] < rows[-1]["t_ms"]
    since = tc.get("/api/trace", params={"since_ms": rows[-2]["t_ms"]}).json()["rows"]
    assert len(since) == 1


def test_websocket_speaks_wire_grammar(client):
    tc, sim = client
    with tc.websocket_connect("/ws") as ws:
        ws.send_text("GET 1 STATE\n")
        reply = ws.receive_text()
        assert reply.startswith("STATE 1 ")
        ws.send_text("TARGET 2 0 9.000\n")
        assert ws.receive_text().rstrip("\n") == "ACK 2"
        ws.send_text("CMD 3 Forward High Short\n")
        assert ws.receive_text().rstrip("\n") == "ACK 3"
        ws.send_text("gibberish\n")
        assert ws.receive_text().startswith("ERR 400")
        ws.send_text("CMD 4 Up High Short\n")   # translation in Hand mode
        assert ws.receive_text().startswith("ERR 409")


def test_sequence_record_replay_flow(client):
    tc, sim = client
    assert tc.get("/api/sequences").json() == {"sequences": [], "recording": None}

    assert tc.post("/api/sequences/record", json={"name": "wave"}).status_code == 200
    assert tc.post("/api/sequences/record", json={"name": "other"}).status_code == 409

    with tc.websocket_connect("/ws") as ws:
        ws.send_text("CMD 1 Forward High Short\n")
        ws.receive_text()
        sim.advance(0.1)
        ws.send_text("CMD 2 Backward Low Short\n")
        ws.receive_text()

    info = tc.post("/api/sequences/record/stop").json()
    assert info["name"] == "wave"
    assert [s["name"] for s in info["steps"]] == ["Forward", "Backward"]
    assert info["steps"][1]["offset_ms"] == 100

    listing = tc.get("/api/sequences").json()
    assert listing["recording"] is None
    assert [s["name"] for s in listing["sequences"]] == ["wave"]

    assert tc.post("/api/sequences/wave/replay").status_code == 200
    # replay considered active until the last queued step delivers
    assert tc.post("/api/sequences/wave/replay").status_code == 409
    sim.advance(0.2)
    assert tc.post("/api/sequences/wave/replay").status_code == 200

    assert tc.post("/api/sequences/wave/rename",
                   json={"new_name": "wave"}).status_code == 409
    assert tc.post("/api/sequences/wave/rename",
                   json={"new_name": "hello"}).status_code == 200
    assert tc.delete("/api/sequences/hello").status_code == 200
    assert tc.delete("/api/sequences/hello").status_code == 404
    assert tc.post("/api/sequences/ghost/replay").status_code == 404


def test_record_name_collision(client):
    tc, _ = client
    tc.post("/api/sequences/record", json={"name": "a"})
    tc.post("/api/sequences/record/stop")
    assert tc.post("/api/sequences/record", json={"name": "a"}).status_code == 409


def test_jobs_gen_and_eval(client, tmp_path):
    tc, _ = client
    body = tc.post("/api/jobs/gen", json={
        "out_dir": str(tmp_path), "seed": 3, "channels": 4, "duration_s": 2.0,
    }).json()
    assert body["report"]["seed"] == 3
    assert (tmp_path / "spikes.csv").exists()
    assert (tmp_path / "positions.csv").exists()

    # build a lag trace and evaluate it through the job endpoint
    trace = tmp_path / "trace.csv"
    t = np.arange(0, 6000, 20)
    with open(trace, "w") as fh:
        fh.write("t_ms,requested_mm,actual_mm\n")
        for ti in t:
            req = 10 + 5 * np.sin(2 * np.pi * 0.5 * ti / 1000.0)
            act = 10 + 5 * np.sin(2 * np.pi * 0.5 * (ti - 140.0) / 1000.0)
            fh.write(f"{ti},{req:.3f},{act:.3f}\n")
    body = tc.post("/api/jobs/eval", json={"trace_csv": str(trace)}).json()
    assert abs(body["report"]["lag_ms"] - 140.0) <= 20.0

    assert tc.post("/api/jobs/eval",
                   json={"trace_csv": str(tmp_path / "nope.csv")}).status_code == 404


def test_jobs_fit(client, tmp_path):
    tc, _ = client
    cfg = synth.SynthConfig(seed=9, channels=4, duration_s=15.0)
    ops.generate_dataset(tmp_path, cfg)
    body = tc.post("/api/jobs/fit", json={
        "spikes_csv": str(tmp_path / "spikes.csv"),
        "positions_csv": str(tmp_path / "positions.csv"),
        "finger": "index",
        "params_out": str(tmp_path / "index.params"),
        "pair_count": 3,
        "train_fraction": 1.0,
    })
    assert body.status_code == 200
    assert (tmp_path / "index.params").exists()
    assert body.json()["report"]["train_rmse_mm"] < 1.0

    bad = tc.post("/api/jobs/fit", json={
        "spikes_csv": str(tmp_path / "spikes.csv"),
        "positions_csv": str(tmp_path / "positions.csv"),
        "finger": "elbow",
    })
    assert bad.status_code == 400
