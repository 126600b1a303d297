"""Tick-driven dataflow runtime for the grasp-decoding scenario: a CSV
spike reader feeding channel selection, two finger decoders, an adder
producing the finger distance, and printer/network/trace sinks.

A scenario is a flat text document of ``box`` and ``link`` lines (see
:func:`parse_scenario`); the runner executes the boxes in a fixed
topological order once per chunk (default 20 ms, ten 2 ms samples), so a
virtual-clock run is bit-deterministic and a real-clock run produces the
same sample values with wall-time pacing. Each link holds at most one
in-flight chunk per tick (bounded memory by construction).

The NetClient box is the only blocking I/O in the loop; sends are bounded
by a timeout and failures drop that tick's message rather than stalling
the pipeline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import netproto
from .armsim import ArmSimulator
from .clock import Clock, VirtualClock
from .decoder import DecoderParams, DecoderState, load_params
from .errors import ConfigError, DataError, TransportError
from .signals import SAMPLE_PERIOD_S
from .spikes import read_spike_csv
from .timebase import decode_raw

DEFAULT_CHUNK_S = 0.020
NET_SEND_TIMEOUT_S = 0.050

BOX_KINDS = ("CsvReader", "ChannelSelector", "DecoderBox", "Adder",
             "Printer", "NetClient", "TraceSink")

# kind -> (input ports, optional input ports, output ports)
_PORTS: dict[str, tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]] = {
    "CsvReader": ((), (), ("out",)),
    "ChannelSelector": (("in",), (), ("out",)),
    "DecoderBox": (("in",), (), ("out",)),
    "Adder": (("a", "b"), (), ("out",)),
    "Printer": (("in",), (), ()),
    "NetClient": (("in",), (), ()),
    "TraceSink": (("index",), ("thumb",), ()),
}


@dataclass(frozen=True)
class BoxSpec:
    id: str
    kind: str
    settings: dict[str, str]


@dataclass(frozen=True)
class LinkSpec:
    src_box: str
    src_port: str
    dst_box: str
    dst_port: str


@dataclass(frozen=True)
class ScenarioGraph:
    boxes: tuple[BoxSpec, ...]
    links: tuple[LinkSpec, ...]
    order: tuple[str, ...]          # execution order: (depth, id)

    def box(self, box_id: str) -> BoxSpec:
        for b in self.boxes:
            if b.id == box_id:
                return b
        raise KeyError(box_id)

    def boxes_of_kind(self, kind: str) -> list[BoxSpec]:
        return [b for b in self.boxes if b.kind == kind]


def parse_scenario(text: str) -> ScenarioGraph:
    """Parse and validate the scenario grammar.

    ``box <id> <kind> [key=value ...]`` declares a box, ``link
    <src>.<port> -> <dst>.<port>`` a connection. Unknown kinds, duplicate
    ids, dangling link endpoints, multiply-driven inputs, and cycles are
    config errors.
    """
    boxes: dict[str, BoxSpec] = {}
    links: list[LinkSpec] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "box":
            if len(tokens) < 3:
                raise ConfigError(f"line {lineno}: box needs id and kind")
            box_id, kind = tokens[1], tokens[2]
            if kind not in BOX_KINDS:
                raise ConfigError(f"line {lineno}: unknown box kind {kind!r}")
            if box_id in boxes:
                raise ConfigError(f"line {lineno}: duplicate box id {box_id!r}")
            settings = {}
            for tok in tokens[3:]:
                if "=" not in tok:
                    raise ConfigError(f"line {lineno}: bad setting {tok!r}")
                key, _, value = tok.partition("=")
                settings[key] = value
            boxes[box_id] = BoxSpec(id=box_id, kind=kind, settings=settings)
        elif tokens[0] == "link":
            if len(tokens) != 4 or tokens[2] != "->":
                raise ConfigError(f"line {lineno}: link syntax is "
                                  "'link src.port -> dst.port'")
            try:
                src_box, src_port = tokens[1].split(".", 1)
                dst_box, dst_port = tokens[3].split(".", 1)
            except ValueError:
                raise ConfigError(f"line {lineno}: endpoints need box.port") from None
            links.append(LinkSpec(src_box, src_port, dst_box, dst_port))
        else:
            raise ConfigError(f"line {lineno}: unknown directive {tokens[0]!r}")

    seen_inputs: set[tuple[str, str]] = set()
    for ln in links:
        for box_id in (ln.src_box, ln.dst_box):
            if box_id not in boxes:
                raise ConfigError(f"link references unknown box {box_id!r}")
        required, optional, outputs = _PORTS[boxes[ln.src_box].kind]
        if ln.src_port not in outputs:
            raise ConfigError(f"box {ln.src_box!r} has no output port "
                              f"{ln.src_port!r}")
        required, optional, outputs = _PORTS[boxes[ln.dst_box].kind]
        if ln.dst_port not in required + optional:
            raise ConfigError(f"box {ln.dst_box!r} has no input port "
                              f"{ln.dst_port!r}")
        key = (ln.dst_box, ln.dst_port)
        if key in seen_inputs:
            raise ConfigError(f"input {ln.dst_box}.{ln.dst_port} has two producers")
        seen_inputs.add(key)

    for box in boxes.values():
        required = _PORTS[box.kind][0]
        for port in required:
            if (box.id, port) not in seen_inputs:
                raise ConfigError(f"input {box.id}.{port} is not connected")

    order = _topological_order(boxes, links)
    return ScenarioGraph(boxes=tuple(boxes.values()), links=tuple(links),
                         order=order)


def load_scenario(path: str | Path) -> ScenarioGraph:
    return parse_scenario(Path(path).read_text())


def _topological_order(boxes: dict[str, BoxSpec],
                       links: list[LinkSpec]) -> tuple[str, ...]:
    preds: dict[str, set[str]] = {b: set() for b in boxes}
    succs: dict[str, set[str]] = {b: set() for b in boxes}
    for ln in links:
        preds[ln.dst_box].add(ln.src_box)
        succs[ln.src_box].add(ln.dst_box)
    # Longest-path depth from sources; ties broken by box id for a fixed order.
    depth: dict[str, int] = {}
    remaining = dict(preds)
    frontier = sorted(b for b, p in remaining.items() if not p)
    for b in frontier:
        depth[b] = 0
    resolved = set(frontier)
    while frontier:
        nxt = []
        for b in frontier:
            for s in succs[b]:
                depth[s] = max(depth.get(s, 0), depth[b] + 1)
                if all(p in resolved for p in preds[s]) and s not in resolved:
                    nxt.append(s)
                    resolved.add(s)
        frontier = sorted(set(nxt))
    if len(resolved) != len(boxes):
        cyclic = sorted(set(boxes) - resolved)
        raise ConfigError(f"scenario graph has a cycle involving {cyclic}")
    return tuple(sorted(boxes, key=lambda b: (depth[b], b)))


# ---------------------------------------------------------------------------
# Chunks
# ---------------------------------------------------------------------------

@dataclass
class SpikeChunk:
    start_s: float
    end_s: float
    times_s: np.ndarray      # sorted within the chunk
    channels: np.ndarray
    channel_count: int
    _by_channel: list | None = None

    def __len__(self) -> int:
        return int(self.times_s.size)

    def by_channel(self) -> list:
        """Per-channel time arrays; computed once and shared by every
        consumer of this chunk."""
        if self._by_channel is None:
            order = np.argsort(self.channels, kind="stable")
            ch_sorted = self.channels[order]
            t_sorted = self.times_s[order]
            bounds = ch_sorted.searchsorted(np.arange(self.channel_count + 1))
            self._by_channel = [t_sorted[bounds[c]:bounds[c + 1]]
                                for c in range(self.channel_count)]
        return self._by_channel


@dataclass(frozen=True)
class SignalChunk:
    start_s: float
    end_s: float
    k0: int                  # global index of the first sample
    samples_mm: np.ndarray
    period_s: float = SAMPLE_PERIOD_S

    def __len__(self) -> int:
        return int(self.samples_mm.size)

    def times_ms(self) -> np.ndarray:
        return 1000.0 * self.period_s * (self.k0 + np.arange(len(self)))


# ---------------------------------------------------------------------------
# Runtime boxes
# ---------------------------------------------------------------------------

class RunContext:
    def __init__(self, base_dir: Path, chunk_s: float,
                 engine: ArmSimulator | None = None,
                 net_addr: str | None = None):
        self.base_dir = base_dir
        self.chunk_s = chunk_s
        self.engine = engine
        self.net_addr = net_addr
        self.feature_cache: dict = {}

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


class _Box:
    def __init__(self, spec: BoxSpec):
        self.spec = spec
        self.samples_in = 0
        self.samples_out = 0

    def setup(self, ctx: RunContext) -> None:
        pass

    def extent_s(self) -> float | None:
        """Stream length for source boxes; None for non-sources."""
        return None

    def process(self, ctx: RunContext, tick: int, start_s: float, end_s: float,
                inputs: dict[str, object]) -> dict[str, object]:
        raise NotImplementedError

    def finish(self, ctx: RunContext) -> None:
        pass


class CsvReaderBox(_Box):
    def setup(self, ctx: RunContext) -> None:
        path = self.spec.settings.get("file")
        if not path:
            raise ConfigError(f"box {self.spec.id}: CsvReader needs file=")
        full = ctx.resolve(path)
        if not full.exists():
            raise ConfigError(f"box {self.spec.id}: no such file {full}")
        with open(full) as fh:
            csv = read_spike_csv(fh)
        order = np.argsort(np.array([ev.time.raw for ev in csv.events],
                                    dtype=np.uint64), kind="stable")
        self._times = np.array([decode_raw(csv.events[i].time.raw) for i in order])
        self._channels = np.array([csv.events[i].channel for i in order],
                                  dtype=np.int32)
        declared = self.spec.settings.get("channels")
        self._channel_count = int(declared) if declared else csv.channel_count
        duration = self.spec.settings.get("duration")
        if duration is not None:
            self._extent = float(duration)
        else:
            self._extent = float(self._times[-1]) if self._times.size else 0.0

    def extent_s(self) -> float | None:
        return self._extent

    def process(self, ctx, tick, start_s, end_s, inputs):
        lo = np.searchsorted(self._times, start_s, side="left")
        hi = np.searchsorted(self._times, end_s, side="left")
        chunk = SpikeChunk(start_s=start_s, end_s=end_s,
                           times_s=self._times[lo:hi],
                           channels=self._channels[lo:hi],
                           channel_count=self._channel_count)
        self.samples_out += len(chunk)
        return {"out": chunk}


class ChannelSelectorBox(_Box):
    def setup(self, ctx: RunContext) -> None:
        keep = self.spec.settings.get("keep", "all")
        self._keep = None if keep == "all" else _parse_channel_list(keep)

    def process(self, ctx, tick, start_s, end_s, inputs):
        chunk: SpikeChunk = inputs["in"]  # type: ignore[assignment]
        self.samples_in += len(chunk)
        if self._keep is None:
            out = chunk
        else:
            bad = [c for c in self._keep if c >= chunk.channel_count]
            if bad:
                raise ConfigError(f"box {self.spec.id}: channels {bad} out of "
                                  f"range for a {chunk.channel_count}-channel stream")
            mask = np.isin(chunk.channels, self._keep)
            out = SpikeChunk(start_s=start_s, end_s=end_s,
                             times_s=chunk.times_s[mask],
                             channels=chunk.channels[mask],
                             channel_count=chunk.channel_count)
        self.samples_out += len(out)
        return {"out": out}


def _parse_channel_list(text: str) -> np.ndarray:
    ids: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, _, b = part.partition("-")
            ids.extend(range(int(a), int(b) + 1))
        elif part:
            ids.append(int(part))
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate channel ids in {text!r}")
    return np.array(sorted(ids), dtype=np.int32)


class DecoderBox(_Box):
    """Streaming per-chunk decoder: maintains trailing spike buffers long
    enough for the rate window and synchrony delta, computes that chunk's
    feature matrices vectorized, then rolls the free-running state forward
    sample by sample (identical arithmetic to the offline replay)."""

    def setup(self, ctx: RunContext) -> None:
        path = self.spec.settings.get("params")
        if not path:
            raise ConfigError(f"box {self.spec.id}: DecoderBox needs params=")
        full = ctx.resolve(path)
        if not full.exists():
            raise ConfigError(f"box {self.spec.id}: no such params file {full}")
        with open(full) as fh:
            self.params: DecoderParams = load_params(fh)
        self._y0 = float(self.spec.settings.get("y0", "2.0"))
        self.state = DecoderState(self._y0, self.params.smoothing_depth)
        self._warmup = self.params.warmup_samples()
        self._buffers = [np.empty(0) for _ in range(self.params.channel_count)]
        self._keep_s = self.params.bin_width_s + self.params.sync_delta_s + 0.01
        self._ticks_since_trim = 0

    def _ingest(self, chunk: SpikeChunk) -> None:
        if chunk.channel_count != self.params.channel_count:
            raise ConfigError(
                f"box {self.spec.id}: params fitted for "
                f"{self.params.channel_count} channels, stream has "
                f"{chunk.channel_count}")
        per_channel = chunk.by_channel()
        bufs = self._buffers
        for c in range(self.params.channel_count):
            new = per_channel[c]
            if new.size:
                bufs[c] = np.concatenate([bufs[c], new])
        # Trimming is only for memory; window counts use absolute times, so
        # doing it every few chunks changes nothing numerically.
        self._ticks_since_trim += 1
        if self._ticks_since_trim >= 32:
            self._ticks_since_trim = 0
            horizon = chunk.start_s - self._keep_s
            for c in range(self.params.channel_count):
                buf = bufs[c]
                cut = buf.searchsorted(horizon, side="left")
                if cut:
                    bufs[c] = buf[cut:]

    def _features(self, ctx: RunContext, chunk: SpikeChunk,
                  grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        key = (chunk.start_s, chunk.end_s, p.bin_width_s, p.sync_delta_s, p.pairs)
        cached = ctx.feature_cache.get(key)
        if cached is not None:
            return cached
        w = p.bin_width_s
        n = grid.size
        # One stacked query per array: [window starts | window ends].
        edges = np.concatenate([grid - w, grid])
        rates = np.empty((n, p.channel_count))
        for c, buf in enumerate(self._buffers):
            idx = buf.searchsorted(edges, side="left")
            rates[:, c] = (idx[n:] - idx[:n]) / w
        sync = np.empty((n, len(p.pairs)))
        delta = p.sync_delta_s
        for pi, (j, k) in enumerate(p.pairs):
            a, b = self._buffers[j], self._buffers[k]
            na_idx = a.searchsorted(edges, side="left")
            nb_idx = b.searchsorted(edges, side="left")
            lo = b.searchsorted(a - delta, side="left")
            hi = b.searchsorted(a + delta, side="right")
            coinc = a[hi > lo]
            c_idx = coinc.searchsorted(edges, side="left")
            c_cnt = c_idx[n:] - c_idx[:n]
            denom = np.maximum(na_idx[n:] - na_idx[:n], nb_idx[n:] - nb_idx[:n])
            svals = np.zeros(n)
            nz = denom > 0
            svals[nz] = c_cnt[nz] / denom[nz]
            sync[:, pi] = svals
        ctx.feature_cache[key] = (rates, sync)
        # Only the current tick's entries are useful; drop older ones.
        for old in [k2 for k2 in ctx.feature_cache if k2[1] < chunk.start_s]:
            del ctx.feature_cache[old]
        return rates, sync

    def process(self, ctx, tick, start_s, end_s, inputs):
        chunk: SpikeChunk = inputs["in"]  # type: ignore[assignment]
        self.samples_in += len(chunk)
        self._ingest(chunk)
        p = self.params
        k0 = int(round(start_s / p.period_s))
        count = int(round((end_s - start_s) / p.period_s))
        ks = k0 + np.arange(count)
        grid = ks.astype(np.float64) * p.period_s
        rates, sync = self._features(ctx, chunk, grid)
        rect = np.maximum(rates - p.thresholds[None, :], 0.0)
        out = np.empty(count)
        state = self.state
        lo, hi = p.clamp_mm
        for i in range(count):
            if ks[i] < self._warmup:
                out[i] = state.y_mm
                state.push(state.y_mm)
                continue
            dy = float(p.weights @ rect[i] + p.sync_weights @ sync[i]
                       + p.history_weight * state.history_variation() + p.bias)
            y_new = min(max(state.y_mm + dy, lo), hi)
            state.push(y_new)
            state.y_mm = y_new
            out[i] = y_new
        self.samples_out += count
        return {"out": SignalChunk(start_s=start_s, end_s=end_s, k0=k0,
                                   samples_mm=out, period_s=p.period_s)}


class AdderBox(_Box):
    def process(self, ctx, tick, start_s, end_s, inputs):
        a: SignalChunk = inputs["a"]  # type: ignore[assignment]
        b: SignalChunk = inputs["b"]  # type: ignore[assignment]
        if len(a) != len(b) or a.k0 != b.k0:
            raise DataError(f"box {self.spec.id}: misaligned inputs")
        self.samples_in += len(a) + len(b)
        out = SignalChunk(start_s=start_s, end_s=end_s, k0=a.k0,
                          samples_mm=a.samples_mm + b.samples_mm,
                          period_s=a.period_s)
        self.samples_out += len(out)
        return {"out": out}


class PrinterBox(_Box):
    """One line per chunk (not per sample): latest value of the chunk."""

    def setup(self, ctx: RunContext) -> None:
        target = self.spec.settings.get("target", "stdout")
        self._fh = None
        self._path = None
        if target != "stdout":
            self._path = ctx.resolve(target)
            self._fh = open(self._path, "w")
        self.lines = 0

    def process(self, ctx, tick, start_s, end_s, inputs):
        chunk: SignalChunk = inputs["in"]  # type: ignore[assignment]
        self.samples_in += len(chunk)
        self.samples_out += len(chunk)
        if len(chunk):
            t_ms = int(round(end_s * 1000.0))
            line = f"{t_ms} {chunk.samples_mm[-1]:.3f}\n"
            if self._fh is not None:
                self._fh.write(line)
            else:
                print(line, end="")
            self.lines += 1
        return {}

    def finish(self, ctx: RunContext) -> None:
        if self._fh is not None:
            self._fh.close()


class NetClientBox(_Box):
    """Sends one TARGET per chunk (the chunk's latest sample) to the arm,
    over TCP or directly into a hosted in-process simulator."""

    def setup(self, ctx: RunContext) -> None:
        self._seq = 0
        self.sent = 0
        self.dropped = 0
        self._client = None
        self._engine = None
        addr = ctx.net_addr or self.spec.settings.get("addr", "local")
        timeout_s = float(self.spec.settings.get("timeout_ms", "50")) / 1000.0
        if addr == "local":
            if ctx.engine is None:
                raise ConfigError(
                    f"box {self.spec.id}: addr=local but no in-process arm "
                    "is hosted (pass --addr or run via cmd_replay)")
            self._engine = ctx.engine
        else:
            host, _, port = addr.partition(":")
            self._client = netproto.ProtoClient(host, int(port or netproto.DEFAULT_TCP_PORT),
                                                timeout_s=timeout_s)

    def process(self, ctx, tick, start_s, end_s, inputs):
        chunk: SignalChunk = inputs["in"]  # type: ignore[assignment]
        self.samples_in += len(chunk)
        if not len(chunk):
            return {}
        dist = min(max(float(chunk.samples_mm[-1]), 0.0),
                   netproto.MAX_DISTANCE_MM - 0.001)
        t_ms = int(round(end_s * 1000.0))
        try:
            if self._engine is not None:
                self._seq += 1
                reply = self._engine.submit(netproto.Target(
                    seq=self._seq, t_ms=t_ms, distance_mm=dist))
                if isinstance(reply, netproto.Err):
                    self.dropped += 1
                else:
                    self.sent += 1
            else:
                self._client.send_target(dist, t_ms)
                self.sent += 1
        except TransportError:
            # Degrade by dropping this tick's message; never stall the loop.
            self.dropped += 1
        return {}

    def finish(self, ctx: RunContext) -> None:
        if self._client is not None:
            self._client.close()


class TraceSinkBox(_Box):
    """Accumulates one or two signals and writes the position CSV schema."""

    def setup(self, ctx: RunContext) -> None:
        target = self.spec.settings.get("file")
        if not target:
            raise ConfigError(f"box {self.spec.id}: TraceSink needs file=")
        self._path = ctx.resolve(target)
        self._index: list[np.ndarray] = []
        self._thumb: list[np.ndarray] = []
        self._k_first: int | None = None

    def process(self, ctx, tick, start_s, end_s, inputs):
        a: SignalChunk = inputs["index"]  # type: ignore[assignment]
        b = inputs.get("thumb")
        self.samples_in += len(a) + (len(b) if b is not None else 0)
        self.samples_out += len(a)
        if self._k_first is None:
            self._k_first = a.k0
        self._index.append(a.samples_mm)
        self._thumb.append(b.samples_mm if b is not None else np.zeros(len(a)))
        return {}

    def finish(self, ctx: RunContext) -> None:
        from .spikes import write_position_csv
        index = np.concatenate(self._index) if self._index else np.empty(0)
        thumb = np.concatenate(self._thumb) if self._thumb else np.empty(0)
        start = (self._k_first or 0) * SAMPLE_PERIOD_S
        with open(self._path, "w") as fh:
            write_position_csv(fh, index, thumb, start_s=start)


_BOX_CLASSES = {
    "CsvReader": CsvReaderBox,
    "ChannelSelector": ChannelSelectorBox,
    "DecoderBox": DecoderBox,
    "Adder": AdderBox,
    "Printer": PrinterBox,
    "NetClient": NetClientBox,
    "TraceSink": TraceSinkBox,
}


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    ticks: int = 0
    duration_s: float = 0.0
    wall_s: float = 0.0
    samples: dict[str, tuple[int, int]] = field(default_factory=dict)
    printer_lines: int = 0
    net_sent: int = 0
    net_dropped: int = 0
    trace_files: list[str] = field(default_factory=list)
    collected: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)


def run(graph: ScenarioGraph, *, clock: Clock | None = None,
        chunk_s: float = DEFAULT_CHUNK_S, base_dir: str | Path = ".",
        engine: ArmSimulator | None = None, duration_s: float | None = None,
        net_addr: str | None = None,
        collect: Sequence[tuple[str, str]] = ()) -> RunReport:
    """Execute a scenario to completion.

    ``clock=None`` runs on a virtual clock (as fast as possible,
    bit-deterministic); a real clock paces each chunk to wall time.
    ``engine`` hosts an in-process arm simulator that NetClient boxes with
    ``addr=local`` talk to; the runner advances it in lockstep with the
    stream. ``collect`` captures the samples flowing out of the named
    (box, port) pairs into the report.
    """
    virtual = clock is None
    if clock is None:
        clock = VirtualClock()
    ctx = RunContext(base_dir=Path(base_dir), chunk_s=chunk_s, engine=engine,
                     net_addr=net_addr)
    boxes: dict[str, _Box] = {}
    report = RunReport()
    try:
        for spec in graph.boxes:
            box = _BOX_CLASSES[spec.kind](spec)
            box.setup(ctx)
            boxes[spec.id] = box
    except Exception:
        for b in boxes.values():
            b.finish(ctx)
        raise

    out_links: dict[tuple[str, str], list[LinkSpec]] = {}
    for ln in graph.links:
        out_links.setdefault((ln.src_box, ln.src_port), []).append(ln)

    extents = [b.extent_s() for b in boxes.values() if b.extent_s() is not None]
    if duration_s is None:
        if not extents:
            raise ConfigError("scenario has no source box; pass a duration")
        duration_s = max(extents)
    n_ticks = int(np.ceil(round(duration_s / chunk_s, 9)))

    buffers: dict[tuple[str, str], list] = {
        (ln.dst_box, ln.dst_port): [] for ln in graph.links}
    collected: dict[tuple[str, str], list[np.ndarray]] = {
        tuple(cp): [] for cp in collect}

    wall_start = time.perf_counter()
    try:
        for tick in range(n_ticks):
            start_s = tick * chunk_s
            end_s = (tick + 1) * chunk_s
            for box_id in graph.order:
                box = boxes[box_id]
                inputs: dict[str, object] = {}
                required, optional, _ = _PORTS[box.spec.kind]
                for port in required + optional:
                    buf = buffers.get((box_id, port))
                    if buf:
                        inputs[port] = buf.pop(0)
                    elif port in required and (box_id, port) in buffers:
                        raise DataError(f"box {box_id}: no chunk on port {port!r} "
                                        f"at tick {tick}")
                try:
                    outputs = box.process(ctx, tick, start_s, end_s, inputs)
                except (ConfigError, DataError, TransportError):
                    raise
                except Exception as exc:
                    raise DataError(f"box {box_id} failed at tick {tick}: {exc}") from exc
                for port, chunk in outputs.items():
                    if (box_id, port) in collected and isinstance(chunk, SignalChunk):
                        collected[(box_id, port)].append(chunk.samples_mm)
                    for ln in out_links.get((box_id, port), []):
                        buf = buffers[(ln.dst_box, ln.dst_port)]
                        buf.append(chunk)
                        if len(buf) > 2:
                            raise DataError(f"link to {ln.dst_box}.{ln.dst_port} "
                                            "buffered more than 2 chunks")
            if engine is not None:
                engine.advance_to(end_s)
            if not virtual:
                clock.sleep_until(end_s)
    finally:
        for box in boxes.values():
            box.finish(ctx)

    report.ticks = n_ticks
    report.duration_s = n_ticks * chunk_s
    report.wall_s = time.perf_counter() - wall_start
    for box_id, box in boxes.items():
        report.samples[box_id] = (box.samples_in, box.samples_out)
        if isinstance(box, PrinterBox):
            report.printer_lines += box.lines
        if isinstance(box, NetClientBox):
            report.net_sent += box.sent
            report.net_dropped += box.dropped
        if isinstance(box, TraceSinkBox):
            report.trace_files.append(str(box._path))
    for key, parts in collected.items():
        report.collected[key] = (np.concatenate(parts) if parts
                                 else np.empty(0))
    return report
