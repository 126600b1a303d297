"""Arm simulator: command semantics, exact integration, latency queues,
record/replay, and invariant fuzzing."""

import math

import numpy as np
import pytest

from neurochain.armsim import (
    ArmConfig,
    ArmSimulator,
    LatencyQueue,
    MotionSequence,
)
from neurochain.errors import ConfigError, ProtocolError
from neurochain.netproto import Ack, Command, Err, ModeSwitch, StateQuery, Target


def make_sim(**kw) -> ArmSimulator:
    defaults = dict(command_latency_s=0.0, feedback_latency_s=0.0)
    defaults.update(kw)
    return ArmSimulator(ArmConfig(**defaults))


def deliver_and_settle(sim, seconds=0.002):
    sim.advance(seconds)


# -- latency queue -------------------------------------------------------------

def test_latency_queue_exact_delivery():
    q = LatencyQueue(0.150)
    q.push(1.0, "a")
    q.push(1.01, "b")
    assert q.pop_ready(1.1499999) == []
    assert q.pop_ready(1.150) == ["a"]
    assert q.pop_ready(1.160) == ["b"]


def test_latency_queue_fifo_order():
    q = LatencyQueue(0.05)
    for i in range(10):
        q.push(1.0, i)
    assert q.pop_ready(2.0) == list(range(10))


def test_latency_queue_rejects_negative():
    with pytest.raises(ConfigError):
        LatencyQueue(-0.1)


# -- command semantics ------------------------------------------------------------

def test_forward_high_long_in_arm_mode_moves_30cm():
    sim = make_sim()
    sim.mode = "Arm"
    sim.apply_command(Command(1, "Forward", "High", "Long"))
    sim.advance(1.5)
    assert sim.pos_m[0] == pytest.approx(0.30, abs=1e-9)
    assert sim.pos_m[1] == 0.0 and sim.pos_m[2] == 0.0


def test_low_speed_short_action():
    sim = make_sim()
    sim.mode = "Arm"
    sim.apply_command(Command(1, "Up", "Low", "Short"))
    sim.advance(1.0)
    assert sim.pos_m[2] == pytest.approx(0.25 * 0.30 * 0.200, abs=1e-9)


def test_diagonal_speed_capped():
    sim = make_sim()
    sim.mode = "Arm"
    sim.apply_command(Command(1, "ForwardLeft", "High", "Long"))
    sim.advance(1.0)
    speed = math.hypot(sim.pos_m[0], sim.pos_m[1])
    assert speed == pytest.approx(0.30, abs=1e-9)


def test_motion_while_unpowered_is_409():
    sim = make_sim()
    sim.powered = False
    reply = sim.submit(Command(1, "Forward", "High", "Short"))
    assert isinstance(reply, Err) and reply.code == 409
    reply = sim.submit(Target(2, 0, 5.0))
    assert isinstance(reply, Err) and reply.code == 409


def test_onoff_allowed_unpowered_and_toggles():
    sim = make_sim()
    sim.powered = False
    assert isinstance(sim.submit(Command(1, "OnOff", "Low", "Short")), Ack)
    deliver_and_settle(sim)
    assert sim.powered is True


def test_hand_arm_switch_involution():
    sim = make_sim()
    mode0 = sim.mode
    for _ in range(2):
        sim.submit(Command(1, "HandArmSwitch", "Low", "Short"))
        deliver_and_settle(sim)
    assert sim.mode == mode0


def test_hand_mode_rejects_translations():
    sim = make_sim()
    assert sim.mode == "Hand"
    reply = sim.submit(Command(1, "Up", "High", "Short"))
    assert isinstance(reply, Err) and reply.code == 409


def test_arm_mode_rejects_targets():
    sim = make_sim()
    sim.mode = "Arm"
    reply = sim.submit(Target(1, 0, 5.0))
    assert isinstance(reply, Err) and reply.code == 409


def test_latch_commands_set_state():
    sim = make_sim()
    sim.submit(Command(1, "HighSpeed", "Low", "Short"))
    sim.submit(Command(2, "LongAction", "Low", "Short"))
    deliver_and_settle(sim)
    assert sim.speed_setting == "High"
    assert sim.action_setting == "Long"


# -- finger velocity ---------------------------------------------------------------

def test_zero_velocity_holds():
    sim = make_sim()
    sim.set_finger_target_velocity(0.0)
    before = (sim.index_mm, sim.thumb_mm)
    sim.advance(0.5)
    assert (sim.index_mm, sim.thumb_mm) == before


def test_velocity_clamped_to_max():
    sim = make_sim()
    sim.set_finger_target_velocity(500.0)
    assert sim.direct_velocity_mm_s == 40.0


def test_velocity_integrates_exactly():
    sim = make_sim()
    v, duration = 8.0, 0.73
    start = sim.aperture_mm
    sim.set_finger_target_velocity(v)
    sim.advance(duration)
    assert sim.aperture_mm - start == pytest.approx(v * duration, abs=1e-9)


def test_velocity_requires_hand_mode():
    sim = make_sim()
    sim.mode = "Arm"
    with pytest.raises(ProtocolError):
        sim.set_finger_target_velocity(1.0)


def test_program_expires_mid_step():
    sim = make_sim()
    sim.apply_command(Command(1, "Forward", "High", "Short"))  # 200 ms close
    start = sim.aperture_mm
    sim.advance(0.5)   # program covers only the first 200 ms
    assert sim.aperture_mm - start == pytest.approx(40.0 * 0.200, abs=1e-9)


def test_fixed_point_without_drive():
    sim = make_sim()
    before = sim.snapshot()
    sim.advance(1.0)
    after = sim.snapshot()
    assert (after.index_mm, after.thumb_mm, after.pos_m) == \
        (before.index_mm, before.thumb_mm, before.pos_m)


def test_target_tracking_settles():
    sim = make_sim()
    sim.submit(Target(1, 0, 12.0))
    sim.advance(2.0)
    assert sim.aperture_mm == pytest.approx(12.0, abs=1e-3)


def test_optional_spring_restores_toward_zero():
    sim = make_sim(spring_per_s=2.0)
    assert sim.index_mm == 2.0
    sim.advance(3.0)
    # lever-like restoring velocity -k*y decays the position exponentially
    assert 0.0 <= sim.index_mm < 0.05
    assert 0.0 <= sim.thumb_mm < 0.05


# -- latency behaviour ----------------------------------------------------------------

def test_command_latency_defers_motion():
    sim = make_sim(command_latency_s=0.150)
    sim.submit(Target(1, 0, 10.0))
    sim.advance(0.100)
    assert sim.aperture_mm == pytest.approx(4.0)   # still at rest
    sim.advance(0.100)
    assert sim.aperture_mm > 4.0                    # delivered at 150 ms


def test_feedback_latency_delays_state():
    sim = make_sim(command_latency_s=0.0, feedback_latency_s=0.150)
    sim.submit(Target(1, 0, 10.0))
    sim.advance(0.100)
    live = sim.aperture_mm
    assert live > 4.0
    state = sim.state_message(seq_echo=7)
    assert state.seq_echo == 7
    assert state.aperture_mm == pytest.approx(4.0)  # 150 ms-old snapshot
    sim.advance(0.200)
    state = sim.state_message(seq_echo=8)
    assert state.aperture_mm > 4.0


def test_state_query_immediate():
    sim = make_sim()
    reply = sim.submit(StateQuery(5))
    assert reply.seq_echo == 5


def test_mode_switch_message():
    sim = make_sim()
    assert isinstance(sim.submit(ModeSwitch(1, "Arm")), Ack)
    deliver_and_settle(sim)
    assert sim.mode == "Arm"


def test_overload_replies_503():
    sim = make_sim(command_latency_s=100.0, max_pending_commands=5)
    for k in range(5):
        assert isinstance(sim.submit(Target(k, 0, 5.0)), Ack)
    reply = sim.submit(Target(9, 0, 5.0))
    assert isinstance(reply, Err) and reply.code == 503


def test_telemetry_monotonic():
    sim = make_sim()
    sim.submit(Target(1, 0, 9.0))
    sim.advance(0.5)
    t = [row[0] for row in sim.telemetry_rows()]
    assert all(b > a for a, b in zip(t, t[1:]))


# -- record / replay -----------------------------------------------------------------

def test_record_replay_reproduces_state():
    def fresh():
        return make_sim(command_latency_s=0.010)

    sim = fresh()
    sim.start_recording()
    sim.submit(Command(1, "HandArmSwitch", "Low", "Short"))
    sim.advance(0.040)
    sim.submit(Command(2, "Forward", "High", "Short"))
    sim.advance(0.300)
    sim.submit(Command(3, "Backward", "Low", "Short"))
    sim.advance(0.300)
    seq = sim.stop_recording()
    assert len(seq) == 3
    final_live = (sim.mode, sim.pos_m[:], sim.index_mm, sim.thumb_mm)

    replayed = fresh()
    replayed.replay(seq)
    replayed.advance(0.700)
    assert replayed.mode == final_live[0]
    assert replayed.pos_m == final_live[1]
    assert replayed.index_mm == final_live[2]
    assert replayed.thumb_mm == final_live[3]


def test_empty_sequence_is_noop():
    sim = make_sim()
    before = sim.snapshot()
    sim.replay(MotionSequence(steps=()))
    sim.advance(0.1)
    after = sim.snapshot()
    assert (after.index_mm, after.pos_m) == (before.index_mm, before.pos_m)


def test_replay_while_active_is_409():
    sim = make_sim(command_latency_s=0.050)
    seq = MotionSequence(steps=((Command(1, "Forward", "Low", "Short"), 0),
                                (Command(2, "Backward", "Low", "Short"), 400)))
    sim.mode = "Arm"
    sim.replay(seq)
    with pytest.raises(ProtocolError) as info:
        sim.replay(seq)
    assert info.value.code == 409
    sim.advance(1.0)
    sim.replay(seq)   # finished; accepted again


def test_replay_unpowered_is_409():
    sim = make_sim()
    sim.powered = False
    with pytest.raises(ProtocolError):
        sim.replay(MotionSequence(steps=()))


def test_replay_from_different_start_same_displacement():
    seq = MotionSequence(steps=((Command(1, "Forward", "High", "Short"), 0),
                                (Command(2, "Left", "Low", "Long"), 250)))

    def run_from(x0):
        sim = make_sim()
        sim.mode = "Arm"
        sim.pos_m = [x0, 0.0, 0.0]
        sim.replay(seq)
        sim.advance(2.0)
        return np.array(sim.pos_m) - np.array([x0, 0.0, 0.0])

    d1 = run_from(0.0)
    d2 = run_from(0.2)
    assert np.allclose(d1, d2, atol=1e-12)


def test_sequence_offsets_must_be_sorted():
    with pytest.raises(ConfigError):
        MotionSequence(steps=((Command(1, "Forward", "Low", "Short"), 100),
                              (Command(2, "Backward", "Low", "Short"), 50)))


# -- invariants under fuzz ----------------------------------------------------------

def test_invariant_fuzz_10k():
    rng = np.random.default_rng(31)
    sim = make_sim(command_latency_s=0.004, feedback_latency_s=0.004)
    names = list(__import__("neurochain.netproto", fromlist=["COMMAND_NAMES"]).COMMAND_NAMES)
    for k in range(10_000):
        action = rng.integers(0, 5)
        if action == 0:
            sim.submit(Target(k, 0, float(rng.uniform(0, 999))))
        elif action == 1:
            sim.submit(Command(k, names[rng.integers(0, 16)],
                               "Low" if rng.integers(0, 2) else "High",
                               "Short" if rng.integers(0, 2) else "Long"))
        elif action == 2:
            sim.submit(ModeSwitch(k, "Hand" if rng.integers(0, 2) else "Arm"))
        elif action == 3 and sim.powered and sim.mode == "Hand":
            sim.submit_velocity(float(rng.uniform(-100, 100)))
        sim.advance(float(rng.uniform(0.001, 0.02)))
        # step() asserts clamps, sphere, and speed cap internally
    cfg = sim.config
    assert cfg.finger_min_mm <= sim.index_mm <= cfg.finger_max_mm
    assert math.sqrt(sum(p * p for p in sim.pos_m)) <= cfg.arm_radius_m + 1e-9
