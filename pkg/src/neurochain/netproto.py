"""Newline-framed text protocol between the decoding pipeline, operator
console, and the arm server.

Grammar (one ASCII line per message, LF-terminated, tokens separated by
one or more spaces)::

    TARGET seq t_ms dist      client -> server   finger-distance setpoint
    CMD seq name speed dur    client -> server   virtual-joystick command
    MODE seq Hand|Arm         client -> server   set control mode
    GET seq STATE             client -> server   request a state snapshot
    STATE seq_echo t_ms index_mm thumb_mm aperture_mm
    ACK seq_echo
    ERR code text...

Distances and positions always carry exactly 3 fractional digits, which
makes serialize(parse(line)) the identity on canonical lines. Sequence
numbers are u32, timestamps u64 milliseconds since the sender's clock
start. No emitted line exceeds 128 bytes.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass
from typing import Union

from .errors import ProtocolError, TransportError, TransportTimeout, WireParseError

# The 16 virtual-joystick commands, 4x4 speller order.
COMMAND_NAMES = (
    "OnOff", "Forward", "ForwardLeft", "ForwardRight",
    "Backward", "BackwardLeft", "BackwardRight", "Up",
    "Down", "Left", "Right", "HandArmSwitch",
    "LowSpeed", "HighSpeed", "ShortAction", "LongAction",
)
SPEEDS = ("Low", "High")
DURATIONS = ("Short", "Long")
MODES = ("Hand", "Arm")

DEFAULT_TCP_PORT = 7420
DEFAULT_WS_PORT = 7421
MAX_LINE_BYTES = 128
MAX_SEQ = (1 << 32) - 1
MAX_T_MS = (1 << 64) - 1
MAX_DISTANCE_MM = 1000.0

ERR_PARSE = 400
ERR_BAD_MODE = 409
ERR_OVERLOADED = 503


@dataclass(frozen=True, slots=True)
class Target:
    seq: int
    t_ms: int
    distance_mm: float


@dataclass(frozen=True, slots=True)
class Command:
    seq: int
    name: str
    speed: str
    duration: str


@dataclass(frozen=True, slots=True)
class ModeSwitch:
    seq: int
    mode: str


@dataclass(frozen=True, slots=True)
class StateQuery:
    seq: int


@dataclass(frozen=True, slots=True)
class State:
    seq_echo: int
    t_ms: int
    index_mm: float
    thumb_mm: float
    aperture_mm: float


@dataclass(frozen=True, slots=True)
class Ack:
    seq_echo: int


@dataclass(frozen=True, slots=True)
class Err:
    code: int
    text: str


WireMessage = Union[Target, Command, ModeSwitch, StateQuery, State, Ack, Err]


def _check_seq(seq: int) -> int:
    if not 0 <= seq <= MAX_SEQ:
        raise ValueError(f"seq {seq} outside u32 range")
    return seq


def _check_t(t_ms: int) -> int:
    if not 0 <= t_ms <= MAX_T_MS:
        raise ValueError(f"t_ms {t_ms} outside u64 range")
    return t_ms


def _check_mm(value: float, limit: float = MAX_DISTANCE_MM) -> float:
    if not 0.0 <= value < limit:
        raise ValueError(f"distance {value} outside [0, {limit}) mm")
    return value


def serialize(msg: WireMessage) -> bytes:
    """Canonical LF-terminated line for a message; raises ValueError on
    out-of-range fields."""
    if isinstance(msg, Target):
        line = (f"TARGET {_check_seq(msg.seq)} {_check_t(msg.t_ms)} "
                f"{_check_mm(msg.distance_mm):.3f}")
    elif isinstance(msg, Command):
        if msg.name not in COMMAND_NAMES:
            raise ValueError(f"unknown command name {msg.name!r}")
        if msg.speed not in SPEEDS or msg.duration not in DURATIONS:
            raise ValueError(f"bad speed/duration {msg.speed!r}/{msg.duration!r}")
        line = f"CMD {_check_seq(msg.seq)} {msg.name} {msg.speed} {msg.duration}"
    elif isinstance(msg, ModeSwitch):
        if msg.mode not in MODES:
            raise ValueError(f"unknown mode {msg.mode!r}")
        line = f"MODE {_check_seq(msg.seq)} {msg.mode}"
    elif isinstance(msg, StateQuery):
        line = f"GET {_check_seq(msg.seq)} STATE"
    elif isinstance(msg, State):
        line = (f"STATE {_check_seq(msg.seq_echo)} {_check_t(msg.t_ms)} "
                f"{_check_mm(msg.index_mm):.3f} {_check_mm(msg.thumb_mm):.3f} "
                f"{_check_mm(msg.aperture_mm, 2 * MAX_DISTANCE_MM):.3f}")
    elif isinstance(msg, Ack):
        line = f"ACK {_check_seq(msg.seq_echo)}"
    elif isinstance(msg, Err):
        if not 100 <= msg.code <= 599:
            raise ValueError(f"ERR code {msg.code} outside 100..599")
        text = " ".join(str(msg.text).split())  # no newlines, single spaces
        line = f"ERR {msg.code} {text}" if text else f"ERR {msg.code}"
    else:
        raise ValueError(f"not a wire message: {msg!r}")
    data = line.encode("ascii") + b"\n"
    if len(data) > MAX_LINE_BYTES:
        raise ValueError(f"serialized line exceeds {MAX_LINE_BYTES} bytes")
    return data


def _parse_int(token: str, limit: int, what: str, line: bytes) -> int:
    if not token.isdigit():
        raise WireParseError(f"{what} must be an unsigned integer", line)
    value = int(token)
    if value > limit:
        raise WireParseError(f"{what} {value} out of range", line)
    return value


def _parse_mm(token: str, line: bytes, limit: float = MAX_DISTANCE_MM) -> float:
    try:
        value = float(token)
    except ValueError:
        raise WireParseError(f"bad decimal {token!r}", line) from None
    if not 0.0 <= value < limit:
        raise WireParseError(f"distance {value} out of range", line)
    return value


def parse(line: bytes | str) -> WireMessage:
    """Parse one protocol line (with or without the trailing LF).

    Accepts any run of spaces between tokens; rejects unknown verbs, wrong
    arity, and out-of-range fields with :class:`WireParseError`.
    """
    raw = line
    if isinstance(line, str):
        data = line.encode("utf-8", "replace")
    else:
        data = line
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise WireParseError("non-ASCII bytes on the wire", raw) from None
    tokens = text.split()
    if not tokens:
        raise WireParseError("empty line", raw)
    verb = tokens[0]
    args = tokens[1:]

    if verb == "TARGET":
        if len(args) != 3:
            raise WireParseError("TARGET takes seq t_ms dist", raw)
        return Target(seq=_parse_int(args[0], MAX_SEQ, "seq", raw),
                      t_ms=_parse_int(args[1], MAX_T_MS, "t_ms", raw),
                      distance_mm=_parse_mm(args[2], raw))
    if verb == "CMD":
        if len(args) != 4:
            raise WireParseError("CMD takes seq name speed dur", raw)
        seq = _parse_int(args[0], MAX_SEQ, "seq", raw)
        name, speed, dur = args[1], args[2], args[3]
        if name not in COMMAND_NAMES:
            raise WireParseError(f"unknown command {name!r}", raw)
        if speed not in SPEEDS:
            raise WireParseError(f"unknown speed {speed!r}", raw)
        if dur not in DURATIONS:
            raise WireParseError(f"unknown duration {dur!r}", raw)
        return Command(seq=seq, name=name, speed=speed, duration=dur)
    if verb == "MODE":
        if len(args) != 2:
            raise WireParseError("MODE takes seq Hand|Arm", raw)
        seq = _parse_int(args[0], MAX_SEQ, "seq", raw)
        if args[1] not in MODES:
            raise WireParseError(f"unknown mode {args[1]!r}", raw)
        return ModeSwitch(seq=seq, mode=args[1])
    if verb == "GET":
        if len(args) != 2 or args[1] != "STATE":
            raise WireParseError("GET takes seq STATE", raw)
        return StateQuery(seq=_parse_int(args[0], MAX_SEQ, "seq", raw))
    if verb == "STATE":
        if len(args) != 5:
            raise WireParseError("STATE takes seq_echo t_ms i t a", raw)
        return State(seq_echo=_parse_int(args[0], MAX_SEQ, "seq_echo", raw),
                     t_ms=_parse_int(args[1], MAX_T_MS, "t_ms", raw),
                     index_mm=_parse_mm(args[2], raw),
                     thumb_mm=_parse_mm(args[3], raw),
                     aperture_mm=_parse_mm(args[4], raw, 2 * MAX_DISTANCE_MM))
    if verb == "ACK":
        if len(args) != 1:
            raise WireParseError("ACK takes seq_echo", raw)
        return Ack(seq_echo=_parse_int(args[0], MAX_SEQ, "seq_echo", raw))
    if verb == "ERR":
        if len(args) < 1:
            raise WireParseError("ERR takes code text...", raw)
        code = _parse_int(args[0], 599, "code", raw)
        if code < 100:
            raise WireParseError(f"ERR code {code} out of range", raw)
        return Err(code=code, text=" ".join(args[1:]))
    raise WireParseError(f"unknown verb {verb!r}", raw)


def err_line(code: int, text: str) -> bytes:
    """Serialized ERR line with the text truncated to fit the line budget."""
    text = " ".join(str(text).split())
    budget = MAX_LINE_BYTES - len(f"ERR {code} \n")
    return serialize(Err(code=code, text=text[:budget]))


class ProtoClient:
    """Blocking client connection speaking the wire grammar over TCP.

    Single-owner: calls must be externally serialized. ``send_target``
    waits for the matching ACK; ``poll_state`` for the matching STATE.
    Socket failures raise :class:`TransportError`; ERR replies raise
    :class:`ProtocolError`.
    """

    def __init__(self, host: str, port: int = DEFAULT_TCP_PORT,
                 timeout_s: float = 1.0):
        self.timeout_s = timeout_s
        self._seq = 0
        self._buf = b""
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout_s)
        except OSError as exc:
            raise TransportError(f"connect to {host}:{port} failed: {exc}") from None

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "ProtoClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _send(self, msg: WireMessage) -> None:
        try:
            self._sock.sendall(serialize(msg))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from None

    def _read_line(self) -> bytes:
        while b"\n" not in self._buf:
            try:
                chunk = self._sock.recv(4096)
            except socket.timeout:
                raise TransportTimeout("timed out waiting for reply") from None
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from None
            if not chunk:
                raise TransportError("connection closed by peer")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _read_message(self) -> WireMessage:
        msg = parse(self._read_line())
        if isinstance(msg, Err):
            raise ProtocolError(msg.code, msg.text)
        return msg

    def send_target(self, distance_mm: float, t_ms: int) -> int:
        """Send a TARGET and wait for its ACK; returns the seq used."""
        seq = self.next_seq()
        self._send(Target(seq=seq, t_ms=t_ms, distance_mm=distance_mm))
        while True:
            msg = self._read_message()
            if isinstance(msg, Ack) and msg.seq_echo == seq:
                return seq

    def send_command(self, name: str, speed: str, duration: str) -> int:
        seq = self.next_seq()
        self._send(Command(seq=seq, name=name, speed=speed, duration=duration))
        while True:
            msg = self._read_message()
            if isinstance(msg, Ack) and msg.seq_echo == seq:
                return seq

    def set_mode(self, mode: str) -> int:
        seq = self.next_seq()
        self._send(ModeSwitch(seq=seq, mode=mode))
        while True:
            msg = self._read_message()
            if isinstance(msg, Ack) and msg.seq_echo == seq:
                return seq

    def poll_state(self) -> State:
        """Send GET and return the STATE echoing its seq."""
        seq = self.next_seq()
        self._send(StateQuery(seq=seq))
        while True:
            msg = self._read_message()
            if isinstance(msg, State) and msg.seq_echo == seq:
                return msg
