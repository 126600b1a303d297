"""Simulated JACO-like arm: first-order finger/arm kinematics with speed
caps, virtual-joystick command semantics, command/feedback latency queues,
and sequence record/replay.

One :class:`ArmSimulator` instance owns all mutable state and is advanced
by an external driver (the asyncio server ticker, the pipeline runner, or
a test) in explicit-Euler ticks; velocities are piecewise constant within
a tick, so integration is exact. Commands and target setpoints travel
through the command latency queue before they take effect, and state
snapshots travel back through the feedback latency queue, reproducing the
requested-vs-actual lag of a transport-delayed arm.

The simulator itself is single-threaded by contract: connection handlers
must call :meth:`ArmSimulator.submit` from the same loop/thread that calls
:meth:`ArmSimulator.advance`.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from . import netproto
from .errors import ConfigError, ProtocolError
from .netproto import (
    Ack,
    Command,
    Err,
    ModeSwitch,
    State,
    StateQuery,
    Target,
    WireMessage,
)

SHORT_ACTION_S = 0.200
LONG_ACTION_S = 1.000
LOW_SPEED_FRACTION = 0.25

ARM_DIRECTIONS = {
    "Forward": (1.0, 0.0, 0.0),
    "Backward": (-1.0, 0.0, 0.0),
    "Left": (0.0, 1.0, 0.0),
    "Right": (0.0, -1.0, 0.0),
    "Up": (0.0, 0.0, 1.0),
    "Down": (0.0, 0.0, -1.0),
    "ForwardLeft": (math.sqrt(0.5), math.sqrt(0.5), 0.0),
    "ForwardRight": (math.sqrt(0.5), -math.sqrt(0.5), 0.0),
    "BackwardLeft": (-math.sqrt(0.5), math.sqrt(0.5), 0.0),
    "BackwardRight": (-math.sqrt(0.5), -math.sqrt(0.5), 0.0),
}
# In Hand mode only grip open/close motions exist.
HAND_DIRECTIONS = {"Forward": 1.0, "Backward": -1.0}
LATCH_COMMANDS = ("LowSpeed", "HighSpeed", "ShortAction", "LongAction")


@dataclass(frozen=True)
class ArmConfig:
    finger_min_mm: float = 0.0
    finger_max_mm: float = 20.0
    finger_speed_mm_s: float = 40.0      # max aperture closing/opening speed
    arm_radius_m: float = 0.90
    arm_speed_m_s: float = 0.30
    tick_s: float = 0.002
    command_latency_s: float = 0.150
    feedback_latency_s: float = 0.150
    tracking_gain_per_s: float = 200.0   # local loop pulling aperture to target
    spring_per_s: float = 0.0            # optional lever-like restoring term
    rest_index_mm: float = 2.0
    rest_thumb_mm: float = 2.0
    telemetry_maxlen: int = 600_000
    max_pending_commands: int = 10_000

    def __post_init__(self):
        if self.tick_s <= 0:
            raise ConfigError("tick must be positive")
        if self.command_latency_s < 0 or self.feedback_latency_s < 0:
            raise ConfigError("latencies must be non-negative")
        if not (self.finger_min_mm < self.finger_max_mm):
            raise ConfigError("empty finger range")


@dataclass(frozen=True)
class ArmSnapshot:
    """Immutable view of the arm at one instant."""

    t_ms: int
    index_mm: float
    thumb_mm: float
    pos_m: tuple[float, float, float]
    mode: str
    speed_setting: str
    action_setting: str
    powered: bool

    @property
    def aperture_mm(self) -> float:
        return self.index_mm + self.thumb_mm


@dataclass(frozen=True)
class MotionSequence:
    """Commands recorded from live input, offsets from recording start."""

    steps: tuple[tuple[Command, int], ...]   # (command, offset_ms)

    def __post_init__(self):
        last = -1
        for _, offset in self.steps:
            if offset < last:
                raise ConfigError("sequence offsets must be non-decreasing")
            last = offset

    def __len__(self) -> int:
        return len(self.steps)


class LatencyQueue:
    """FIFO whose items become visible ``latency`` seconds after enqueue."""

    def __init__(self, latency_s: float):
        if latency_s < 0:
            raise ConfigError("latency must be non-negative")
        self.latency_s = latency_s
        self._heap: list[tuple[float, int, object]] = []
        self._n = 0

    def push(self, now_s: float, item: object) -> float:
        return self.push_at(now_s + self.latency_s, item)

    def push_at(self, deliver_at_s: float, item: object) -> float:
        self._n += 1
        heapq.heappush(self._heap, (deliver_at_s, self._n, item))
        return deliver_at_s

    def pop_ready(self, now_s: float) -> list[object]:
        out = []
        while self._heap and self._heap[0][0] <= now_s:
            out.append(heapq.heappop(self._heap)[2])
        return out

    def next_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class _TimedProgram:
    """Constant-velocity segment from a joystick command."""

    end_s: float
    # Arm translation velocity (m/s) or aperture velocity (mm/s).
    velocity: tuple[float, float, float] | float


class ArmSimulator:
    """Authoritative simulation loop state (fingers, arm pose, queues)."""

    def __init__(self, config: ArmConfig | None = None, *, start_s: float = 0.0):
        self.config = config or ArmConfig()
        cfg = self.config
        self.now_s = float(start_s)
        self.index_mm = cfg.rest_index_mm
        self.thumb_mm = cfg.rest_thumb_mm
        self.pos_m = [0.0, 0.0, 0.0]
        self.mode = "Hand"
        self.speed_setting = "Low"
        self.action_setting = "Short"
        self.powered = True
        self.target_mm: float | None = None
        self.direct_velocity_mm_s: float | None = None
        self.finger_program: _TimedProgram | None = None
        self.arm_program: _TimedProgram | None = None
        self.cmd_queue = LatencyQueue(cfg.command_latency_s)
        self.fb_queue = LatencyQueue(cfg.feedback_latency_s)
        self._delayed: ArmSnapshot = self.snapshot()
        self.fb_queue.push_at(self.now_s, self._delayed)
        self.telemetry: list[tuple[int, float, float]] = []
        self._last_trace_ms = -1
        self._recording: list[tuple[Command, int]] | None = None
        self._recording_t0 = 0.0
        self._replay_until_s = -math.inf
        self.sequences: dict[str, MotionSequence] = {}

    # -- views ------------------------------------------------------------

    @property
    def aperture_mm(self) -> float:
        return self.index_mm + self.thumb_mm

    def t_ms(self) -> int:
        return int(round(self.now_s * 1000.0))

    def snapshot(self) -> ArmSnapshot:
        return ArmSnapshot(
            t_ms=self.t_ms(), index_mm=self.index_mm, thumb_mm=self.thumb_mm,
            pos_m=(self.pos_m[0], self.pos_m[1], self.pos_m[2]),
            mode=self.mode, speed_setting=self.speed_setting,
            action_setting=self.action_setting, powered=self.powered)

    def delayed_snapshot(self) -> ArmSnapshot:
        """Most recent snapshot whose feedback delay has elapsed."""
        ready = self.fb_queue.pop_ready(self.now_s)
        if ready:
            self._delayed = ready[-1]
        return self._delayed

    def state_message(self, seq_echo: int) -> State:
        snap = self.delayed_snapshot()
        return State(seq_echo=seq_echo, t_ms=snap.t_ms,
                     index_mm=snap.index_mm, thumb_mm=snap.thumb_mm,
                     aperture_mm=snap.aperture_mm)

    @property
    def replay_active(self) -> bool:
        return self.now_s < self._replay_until_s

    # -- message intake (connection side) ----------------------------------

    def submit(self, msg: WireMessage) -> WireMessage:
        """Validate an inbound message against current state and either
        queue it through the command latency path (replying ACK) or answer
        immediately (GET -> STATE, invalid -> ERR)."""
        if isinstance(msg, StateQuery):
            return self.state_message(msg.seq)
        if len(self.cmd_queue) >= self.config.max_pending_commands:
            return Err(code=netproto.ERR_OVERLOADED, text="command queue full")
        if isinstance(msg, Target):
            if not self.powered:
                return Err(code=netproto.ERR_BAD_MODE, text="arm is powered off")
            if self.mode != "Hand":
                return Err(code=netproto.ERR_BAD_MODE,
                           text="finger targets need Hand mode")
            self.cmd_queue.push(self.now_s, ("target", msg.distance_mm))
            return Ack(seq_echo=msg.seq)
        if isinstance(msg, Command):
            err = self._validate_command(msg)
            if err is not None:
                return err
            self.cmd_queue.push(self.now_s, ("command", msg))
            if self._recording is not None:
                offset = int(round((self.now_s - self._recording_t0) * 1000.0))
                self._recording.append((msg, offset))
            return Ack(seq_echo=msg.seq)
        if isinstance(msg, ModeSwitch):
            self.cmd_queue.push(self.now_s, ("mode", msg.mode))
            return Ack(seq_echo=msg.seq)
        return Err(code=netproto.ERR_PARSE, text="unsupported message")

    def _validate_command(self, cmd: Command) -> Err | None:
        if cmd.name == "OnOff":
            return None
        if not self.powered:
            return Err(code=netproto.ERR_BAD_MODE, text="arm is powered off")
        if cmd.name in LATCH_COMMANDS or cmd.name == "HandArmSwitch":
            return None
        if self.mode == "Arm":
            if cmd.name not in ARM_DIRECTIONS:
                return Err(code=netproto.ERR_BAD_MODE,
                           text=f"{cmd.name} is not an Arm-mode motion")
            return None
        if cmd.name not in HAND_DIRECTIONS:
            return Err(code=netproto.ERR_BAD_MODE,
                       text=f"{cmd.name} needs Arm mode")
        return None

    def submit_velocity(self, v_mm_s: float) -> None:
        """Queue a direct aperture-velocity command through the command
        latency path (the in-process control-loop entry point)."""
        if not self.powered or self.mode != "Hand":
            raise ProtocolError(netproto.ERR_BAD_MODE,
                                "velocity commands need powered Hand mode")
        self.cmd_queue.push(self.now_s, ("velocity", float(v_mm_s)))

    # -- immediate application (simulation side) ---------------------------

    def set_finger_target_velocity(self, v_mm_s: float) -> None:
        """Commanded aperture velocity, clamped to the finger speed cap and
        split equally between the fingers on integration."""
        if not self.powered or self.mode != "Hand":
            raise ProtocolError(netproto.ERR_BAD_MODE,
                                "velocity commands need powered Hand mode")
        cap = self.config.finger_speed_mm_s
        self.direct_velocity_mm_s = min(max(float(v_mm_s), -cap), cap)
        self.target_mm = None

    def set_target(self, distance_mm: float) -> None:
        self.target_mm = float(distance_mm)
        self.direct_velocity_mm_s = None

    def apply_command(self, cmd: Command) -> None:
        """Apply a delivered command: latches switch state, motions install
        a constant-velocity program for the command's speed and duration."""
        cfg = self.config
        if cmd.name == "OnOff":
            self.powered = not self.powered
            if not self.powered:
                self.finger_program = None
                self.arm_program = None
                self.target_mm = None
                self.direct_velocity_mm_s = None
            return
        if not self.powered:
            return  # became unpowered after validation; drop
        if cmd.name == "HandArmSwitch":
            self.mode = "Arm" if self.mode == "Hand" else "Hand"
            return
        if cmd.name == "LowSpeed":
            self.speed_setting = "Low"
            return
        if cmd.name == "HighSpeed":
            self.speed_setting = "High"
            return
        if cmd.name == "ShortAction":
            self.action_setting = "Short"
            return
        if cmd.name == "LongAction":
            self.action_setting = "Long"
            return
        fraction = LOW_SPEED_FRACTION if cmd.speed == "Low" else 1.0
        duration = SHORT_ACTION_S if cmd.duration == "Short" else LONG_ACTION_S
        end = self.now_s + duration
        if self.mode == "Arm":
            direction = ARM_DIRECTIONS.get(cmd.name)
            if direction is None:
                return
            speed = fraction * cfg.arm_speed_m_s
            vel = (direction[0] * speed, direction[1] * speed, direction[2] * speed)
            self.arm_program = _TimedProgram(end_s=end, velocity=vel)
        else:
            sign = HAND_DIRECTIONS.get(cmd.name)
            if sign is None:
                return
            self.finger_program = _TimedProgram(
                end_s=end, velocity=sign * fraction * cfg.finger_speed_mm_s)

    def _deliver_due(self) -> None:
        for item in self.cmd_queue.pop_ready(self.now_s):
            kind, payload = item
            if kind == "target":
                if self.powered and self.mode == "Hand":
                    self.set_target(payload)
            elif kind == "velocity":
                if self.powered and self.mode == "Hand":
                    self.set_finger_target_velocity(payload)
            elif kind == "mode":
                self.mode = payload
            elif kind == "command":
                self.apply_command(payload)

    # -- integration --------------------------------------------------------

    def _finger_velocity(self) -> float:
        """Aperture velocity for this tick (piecewise constant)."""
        cfg = self.config
        if not self.powered:
            return 0.0
        if self.finger_program is not None:
            return float(self.finger_program.velocity)
        if self.direct_velocity_mm_s is not None:
            return self.direct_velocity_mm_s
        if self.target_mm is not None and self.mode == "Hand":
            err = self.target_mm - self.aperture_mm
            v = cfg.tracking_gain_per_s * err
            return min(max(v, -cfg.finger_speed_mm_s), cfg.finger_speed_mm_s)
        return 0.0

    def _integrate(self, dt_s: float) -> None:
        """Integrate one tick, splitting at program expiries so piecewise
        constant velocities are integrated exactly."""
        cfg = self.config
        t = self.now_s
        t_end = t + dt_s
        while t < t_end - 1e-15:
            bound = t_end
            for prog in (self.finger_program, self.arm_program):
                if prog is not None and t < prog.end_s < bound:
                    bound = prog.end_s
            sub = bound - t

            v_ap = self._finger_velocity()
            vi = 0.5 * v_ap - cfg.spring_per_s * self.index_mm
            vt = 0.5 * v_ap - cfg.spring_per_s * self.thumb_mm
            self.index_mm = min(max(self.index_mm + vi * sub, cfg.finger_min_mm),
                                cfg.finger_max_mm)
            self.thumb_mm = min(max(self.thumb_mm + vt * sub, cfg.finger_min_mm),
                                cfg.finger_max_mm)

            if self.arm_program is not None:
                vx, vy, vz = self.arm_program.velocity
                speed = math.sqrt(vx * vx + vy * vy + vz * vz)
                assert speed <= cfg.arm_speed_m_s + 1e-9
                self.pos_m[0] += vx * sub
                self.pos_m[1] += vy * sub
                self.pos_m[2] += vz * sub
                norm = math.sqrt(sum(p * p for p in self.pos_m))
                if norm > cfg.arm_radius_m:
                    scale = cfg.arm_radius_m / norm
                    self.pos_m = [p * scale for p in self.pos_m]

            t = bound
            if self.finger_program is not None and self.finger_program.end_s <= t:
                self.finger_program = None
            if self.arm_program is not None and self.arm_program.end_s <= t:
                self.arm_program = None

    def check_invariants(self) -> None:
        cfg = self.config
        eps = 1e-9
        if not (cfg.finger_min_mm - eps <= self.index_mm <= cfg.finger_max_mm + eps):
            raise AssertionError(f"index {self.index_mm} outside clamp")
        if not (cfg.finger_min_mm - eps <= self.thumb_mm <= cfg.finger_max_mm + eps):
            raise AssertionError(f"thumb {self.thumb_mm} outside clamp")
        norm = math.sqrt(sum(p * p for p in self.pos_m))
        if norm > cfg.arm_radius_m + 1e-9:
            raise AssertionError(f"arm at {norm:.6f} m outside reach sphere")

    def step(self, dt_s: float) -> None:
        """One Euler tick: deliver due messages, integrate, publish feedback
        and telemetry."""
        if dt_s <= 0:
            raise ValueError("dt must be positive")
        self._deliver_due()
        self._integrate(dt_s)
        self.now_s += dt_s
        snap = self.snapshot()
        self.fb_queue.push(self.now_s, snap)
        self.delayed_snapshot()   # keep the feedback queue drained
        requested = self.target_mm if self.target_mm is not None else self.aperture_mm
        t_ms = self.t_ms()
        if t_ms > self._last_trace_ms:
            self.telemetry.append((t_ms, requested, self.aperture_mm))
            self._last_trace_ms = t_ms
            if len(self.telemetry) > self.config.telemetry_maxlen:
                del self.telemetry[: len(self.telemetry) // 2]
        self.check_invariants()

    def advance(self, duration_s: float) -> None:
        """Advance simulated time by ``duration`` in tick-sized steps.

        Whole ticks are stepped at exactly ``tick_s`` (no accumulated
        remainder), so the tick boundary sequence is identical however the
        total duration is split across calls; only a genuinely fractional
        tail becomes a partial step.
        """
        tick = self.config.tick_s
        n = int(math.floor(duration_s / tick + 1e-6))
        for _ in range(n):
            self.step(tick)
        partial = duration_s - n * tick
        if partial > tick * 1e-6:
            self.step(partial)

    def advance_to(self, t_s: float) -> None:
        if t_s > self.now_s:
            self.advance(t_s - self.now_s)

    # -- record / replay -----------------------------------------------------

    def start_recording(self) -> None:
        self._recording = []
        self._recording_t0 = self.now_s

    def stop_recording(self) -> MotionSequence:
        if self._recording is None:
            raise ProtocolError(netproto.ERR_BAD_MODE, "not recording")
        seq = MotionSequence(steps=tuple(self._recording))
        self._recording = None
        return seq

    @property
    def recording(self) -> bool:
        return self._recording is not None

    def replay(self, sequence: MotionSequence) -> None:
        """Re-submit a recorded sequence at its original offsets (each step
        passes through the command latency queue as live input would)."""
        if not self.powered:
            raise ProtocolError(netproto.ERR_BAD_MODE, "arm is powered off")
        if self.replay_active:
            raise ProtocolError(netproto.ERR_BAD_MODE,
                                "a sequence replay is already running")
        last = self.now_s
        for cmd, offset_ms in sequence.steps:
            at = self.now_s + offset_ms / 1000.0
            self.cmd_queue.push_at(at + self.cmd_queue.latency_s, ("command", cmd))
            last = max(last, at + self.cmd_queue.latency_s)
        self._replay_until_s = last

    # -- telemetry -------------------------------------------------------------

    def telemetry_rows(self, since_ms: int = -1) -> list[tuple[int, float, float]]:
        return [row for row in self.telemetry if row[0] > since_ms]

    # -- runtime reconfiguration ------------------------------------------------

    def set_latency(self, command_s: float | None = None,
                    feedback_s: float | None = None) -> None:
        """Change transport latencies; already-queued items keep their
        original delivery times."""
        if command_s is not None:
            if command_s < 0:
                raise ConfigError("latency must be non-negative")
            self.cmd_queue.latency_s = float(command_s)
        if feedback_s is not None:
            if feedback_s < 0:
                raise ConfigError("latency must be non-negative")
            self.fb_queue.latency_s = float(feedback_s)
