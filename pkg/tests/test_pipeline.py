"""Dataflow runtime: scenario parsing/validation, deterministic execution,
sample conservation, and streaming-vs-offline decoder equivalence."""

import socket
import threading
import time

import numpy as np
import pytest

from neurochain import decoder, ops, pipeline, synth
from neurochain.armsim import ArmConfig, ArmSimulator
from neurochain.clock import MonotonicClock
from neurochain.errors import ConfigError, TransportError
from neurochain.pipeline import (
    AdderBox,
    BoxSpec,
    SignalChunk,
    load_scenario,
    parse_scenario,
    run,
)
from neurochain.signals import FingerTrajectory
from neurochain.spikes import group_into_trains, read_spike_csv

GRASP_SCENARIO = """
# Grasp-decoding workflow: reader -> selector -> two decoders -> adder ->
# printer + network client.
box reader CsvReader file=spikes.csv duration={duration}
box sel ChannelSelector keep=all
box dec_index DecoderBox params=index.params y0=2.0
box dec_thumb DecoderBox params=thumb.params y0=2.0
box add Adder
box print Printer target=printed.txt
box net NetClient addr=local
link reader.out -> sel.in
link sel.out -> dec_index.in
link sel.out -> dec_thumb.in
link dec_index.out -> add.a
link dec_thumb.out -> add.b
link add.out -> print.in
link add.out -> net.in
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """12 s dataset + fitted params + scenario file."""
    root = tmp_path_factory.mktemp("pipe")
    cfg = synth.SynthConfig(seed=77, channels=6, duration_s=12.0)
    ops.generate_dataset(root, cfg)
    fit_cfg = decoder.FitConfig(pair_count=4, ridge=0.1)
    ops.fit_finger(root / "spikes.csv", root / "positions.csv", "index",
                   root / "index.params", fit_cfg, train_fraction=1.0)
    ops.fit_finger(root / "spikes.csv", root / "positions.csv", "thumb",
                   root / "thumb.params", fit_cfg, train_fraction=1.0)
    scenario = root / "grasp.scenario"
    scenario.write_text(GRASP_SCENARIO.format(duration=12.0))
    return root, scenario


# -- parsing / validation ------------------------------------------------------

def test_parse_replica_has_seven_boxes_seven_links(workspace):
    _, scenario = workspace
    graph = load_scenario(scenario)
    assert len(graph.boxes) == 7
    assert len(graph.links) == 7
    assert graph.order[0] == "reader"


def test_shipped_grasp_scenario_is_valid():
    from pathlib import Path

    shipped = Path(__file__).resolve().parent.parent / "scenarios" / "grasp.scenario"
    graph = load_scenario(shipped)
    assert len(graph.boxes) == 7
    assert len(graph.links) == 7
    kinds = sorted(b.kind for b in graph.boxes)
    assert kinds == ["Adder", "ChannelSelector", "CsvReader", "DecoderBox",
                     "DecoderBox", "NetClient", "Printer"]


def test_parse_single_reader_valid():
    graph = parse_scenario("box solo CsvReader file=x.csv\n")
    assert len(graph.boxes) == 1 and len(graph.links) == 0


def test_parse_rejects_self_loop():
    text = ("box a ChannelSelector\n"
            "link a.out -> a.in\n")
    with pytest.raises(ConfigError, match="cycle"):
        parse_scenario(text)


def test_parse_rejects_cycle():
    text = ("box a ChannelSelector\nbox b ChannelSelector\n"
            "link a.out -> b.in\nlink b.out -> a.in\n")
    with pytest.raises(ConfigError, match="cycle"):
        parse_scenario(text)


def test_parse_rejects_unknown_kind():
    with pytest.raises(ConfigError, match="unknown box kind"):
        parse_scenario("box x FluxCapacitor\n")


def test_parse_rejects_dangling_link():
    with pytest.raises(ConfigError, match="unknown box"):
        parse_scenario("box a CsvReader\nlink a.out -> ghost.in\n")
    with pytest.raises(ConfigError, match="no output port"):
        parse_scenario("box a CsvReader\nbox b ChannelSelector\n"
                       "link a.bogus -> b.in\n")


def test_parse_rejects_double_producer():
    text = ("box a CsvReader\nbox b CsvReader\nbox c ChannelSelector\n"
            "link a.out -> c.in\nlink b.out -> c.in\n")
    with pytest.raises(ConfigError, match="two producers"):
        parse_scenario(text)


def test_parse_rejects_unconnected_required_input():
    text = ("box r CsvReader\nbox d DecoderBox\nbox a Adder\n"
            "link r.out -> d.in\nlink d.out -> a.a\n")
    with pytest.raises(ConfigError, match="not connected"):
        parse_scenario(text)


def test_parse_duplicate_box_id():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_scenario("box a CsvReader\nbox a Adder\n")


# -- box behaviour ------------------------------------------------------------------

def test_adder_sums_constant_signals():
    box = AdderBox(BoxSpec(id="add", kind="Adder", settings={}))
    a = SignalChunk(0.0, 0.02, 0, np.full(10, 2.0))
    b = SignalChunk(0.0, 0.02, 0, np.full(10, 3.0))
    out = box.process(None, 0, 0.0, 0.02, {"a": a, "b": b})["out"]
    assert np.all(out.samples_mm == 5.0)


# -- full runs ------------------------------------------------------------------------

def test_run_sample_counts_and_outputs(workspace):
    root, scenario = workspace
    graph = load_scenario(scenario)
    engine = ArmSimulator(ArmConfig())
    report = run(graph, base_dir=root, engine=engine, collect=[("add", "out")])
    assert report.ticks == 600                      # 12 s / 20 ms
    n = 12 * 500
    assert report.samples["dec_index"][1] == n
    assert report.samples["dec_thumb"][1] == n
    assert report.samples["add"] == (2 * n, n)      # conservation
    assert report.printer_lines == 600              # one line per chunk
    assert report.net_sent == 600                   # one target per chunk
    assert report.collected[("add", "out")].size == n
    printed = (root / "printed.txt").read_text().splitlines()
    assert len(printed) == 600


def test_virtual_runs_are_bit_identical(workspace):
    root, scenario = workspace
    graph = load_scenario(scenario)
    outs = []
    for _ in range(2):
        engine = ArmSimulator(ArmConfig())
        report = run(graph, base_dir=root, engine=engine, collect=[("add", "out")])
        outs.append((report.collected[("add", "out")].copy(),
                     tuple(engine.telemetry_rows())))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert outs[0][1] == outs[1][1]


def test_decoder_box_matches_offline_free_run(workspace):
    root, scenario = workspace
    graph = load_scenario(scenario)
    engine = ArmSimulator(ArmConfig())
    report = run(graph, base_dir=root, engine=engine,
                 collect=[("dec_index", "out")])
    streamed = report.collected[("dec_index", "out")]

    with open(root / "spikes.csv") as fh:
        trains = group_into_trains(read_spike_csv(fh))
    with open(root / "index.params") as fh:
        params = decoder.load_params(fh)
    offline = decoder.free_run(trains, params, y0_mm=2.0, n_samples=12 * 500)
    assert np.array_equal(streamed, offline.positions_mm)


def test_trace_sink_writes_position_schema(workspace, tmp_path):
    root, _ = workspace
    text = (f"box reader CsvReader file={root}/spikes.csv duration=12.0\n"
            f"box dec_i DecoderBox params={root}/index.params\n"
            f"box dec_t DecoderBox params={root}/thumb.params\n"
            f"box sink TraceSink file={tmp_path}/trace.csv\n"
            "link reader.out -> dec_i.in\n"
            "link reader.out -> dec_t.in\n"
            "link dec_i.out -> sink.index\n"
            "link dec_t.out -> sink.thumb\n")
    graph = parse_scenario(text)
    report = run(graph, base_dir=root)
    assert str(tmp_path / "trace.csv") in report.trace_files
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "time_s,index_mm,thumb_mm"
    assert len(lines) == 1 + 12 * 500


def test_missing_csv_is_config_error(tmp_path):
    graph = parse_scenario("box r CsvReader file=missing.csv\n")
    with pytest.raises(ConfigError, match="no such file"):
        run(graph, base_dir=tmp_path)


def test_decoder_channel_mismatch_is_config_error(workspace, tmp_path):
    root, _ = workspace
    params33 = decoder.DecoderParams(
        weights=np.zeros(33), thresholds=np.zeros(33), pairs=(),
        sync_weights=np.zeros(0), history_weight=0.0, bias=0.0)
    with open(tmp_path / "p33.params", "w") as fh:
        decoder.save_params(fh, params33)
    text = (f"box reader CsvReader file={root}/spikes.csv\n"
            f"box dec DecoderBox params={tmp_path}/p33.params\n"
            "link reader.out -> dec.in\n")
    with pytest.raises(ConfigError, match="channels"):
        run(parse_scenario(text), base_dir=root)


def test_net_client_without_engine_or_addr_is_config_error(workspace):
    root, scenario = workspace
    graph = load_scenario(scenario)
    with pytest.raises(ConfigError, match="no in-process arm"):
        run(graph, base_dir=root)


def test_real_clock_paces_wall_time_and_matches_virtual_values(workspace):
    root, _ = workspace
    text = (f"box reader CsvReader file={root}/spikes.csv duration=1.0\n"
            f"box dec DecoderBox params={root}/index.params\n"
            "link reader.out -> dec.in\n")
    graph = parse_scenario(text)
    virtual = run(graph, base_dir=root, collect=[("dec", "out")])
    t0 = time.perf_counter()
    real = run(graph, base_dir=root, clock=MonotonicClock(),
               collect=[("dec", "out")])
    elapsed = time.perf_counter() - t0
    assert 0.9 <= elapsed < 3.0
    # Wall pacing must not change a single sample value.
    assert np.array_equal(virtual.collected[("dec", "out")],
                          real.collected[("dec", "out")])


def test_net_client_drops_on_stalled_server(workspace):
    root, _ = workspace
    stall = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    stall.bind(("127.0.0.1", 0))
    stall.listen(4)
    port = stall.getsockname()[1]
    accepted = []

    def eat():
        try:
            conn, _ = stall.accept()
            accepted.append(conn)   # accept but never reply
        except OSError:
            pass

    thread = threading.Thread(target=eat, daemon=True)
    thread.start()
    try:
        text = (f"box reader CsvReader file={root}/spikes.csv duration=1.0\n"
                f"box dec DecoderBox params={root}/index.params\n"
                f"box net NetClient addr=127.0.0.1:{port} timeout_ms=30\n"
                "link reader.out -> dec.in\n"
                "link dec.out -> net.in\n")
        graph = parse_scenario(text)
        t0 = time.perf_counter()
        report = run(graph, base_dir=root)
        wall = time.perf_counter() - t0
        assert report.net_sent == 0
        assert report.net_dropped == 50       # every tick timed out
        assert wall < 15.0                    # bounded by the send timeout
    finally:
        stall.close()
        for conn in accepted:
            conn.close()


def test_net_client_unreachable_is_transport_error(workspace):
    root, _ = workspace
    text = (f"box reader CsvReader file={root}/spikes.csv duration=1.0\n"
            f"box dec DecoderBox params={root}/index.params\n"
            "box net NetClient addr=127.0.0.1:1\n"
            "link reader.out -> dec.in\n"
            "link dec.out -> net.in\n")
    with pytest.raises(TransportError):
        run(parse_scenario(text), base_dir=root)


def test_replay_scenario_outputs(workspace, tmp_path):
    root, scenario = workspace
    report = ops.replay_scenario(scenario, virtual_clock=True, out_dir=tmp_path)
    assert report["ticks"] == 600
    files = {f.split("/")[-1] for f in report["files"]}
    assert "aperture.csv" in files
    assert "arm_trace.csv" in files
    aperture = (tmp_path / "aperture.csv").read_text().splitlines()
    assert len(aperture) == 1 + 6000
