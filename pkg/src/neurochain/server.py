"""Asyncio hosting of the arm simulator: the raw TCP protocol listener and
the ticker that advances the simulation against a real clock.

All connection handlers and the ticker share one event loop, so every
touch of the :class:`~neurochain.armsim.ArmSimulator` is naturally
serialized; handlers only ever call ``submit`` (commands in, replies out)
while the ticker owns time. Multiple concurrent clients are served
fairly, and a malformed line answers ERR 400 without dropping the
connection.
"""

from __future__ import annotations

import asyncio
import logging

from . import netproto
from .armsim import ArmSimulator
from .clock import MonotonicClock
from .errors import WireParseError
from .netproto import serialize

log = logging.getLogger(__name__)

MAX_WIRE_LINE = 1024   # reject absurd lines before parsing


class ArmHost:
    """Owns a simulator, its real-time ticker, and the TCP listener."""

    def __init__(self, sim: ArmSimulator, tcp_port: int = netproto.DEFAULT_TCP_PORT,
                 host: str = "127.0.0.1"):
        self.sim = sim
        self.tcp_port = tcp_port
        self.host = host
        self._server: asyncio.base_events.Server | None = None
        self._ticker: asyncio.Task | None = None
        self._clock = MonotonicClock()
        self.connections = 0

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._handle, self.host, self.tcp_port)
        self._ticker = asyncio.create_task(self._tick_loop())
        log.info("arm server on tcp %s:%d (tick %.0f ms, latency %.0f+%.0f ms)",
                 self.host, self.tcp_port, self.sim.config.tick_s * 1000,
                 self.sim.config.command_latency_s * 1000,
                 self.sim.config.feedback_latency_s * 1000)

    async def stop(self) -> None:
        if self._ticker is not None:
            self._ticker.cancel()
            try:
                await self._ticker
            except asyncio.CancelledError:
                pass
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    @property
    def bound_port(self) -> int:
        assert self._server is not None
        return self._server.sockets[0].getsockname()[1]

    async def _tick_loop(self) -> None:
        tick = self.sim.config.tick_s
        while True:
            await asyncio.sleep(tick)
            # Integrate the actually elapsed time in tick-sized Euler steps.
            self.sim.advance_to(self._clock.now_s())

    def handle_line(self, line: bytes) -> bytes:
        """Parse one wire line, run it through the simulator, return the
        reply line (shared by the TCP and WebSocket front ends)."""
        try:
            msg = netproto.parse(line)
        except WireParseError as exc:
            return netproto.err_line(netproto.ERR_PARSE, str(exc))
        return serialize(self.sim.submit(msg))

    async def _handle(self, reader: asyncio.StreamReader,
                      writer: asyncio.StreamWriter) -> None:
        self.connections += 1
        peer = writer.get_extra_info("peername")
        log.debug("connection from %s", peer)
        try:
            while True:
                try:
                    line = await reader.readuntil(b"\n")
                except asyncio.IncompleteReadError:
                    break
                except asyncio.LimitOverrunError:
                    writer.write(netproto.err_line(netproto.ERR_PARSE, "line too long"))
                    await writer.drain()
                    break
                if len(line) > MAX_WIRE_LINE:
                    writer.write(netproto.err_line(netproto.ERR_PARSE, "line too long"))
                    await writer.drain()
                    continue
                writer.write(self.handle_line(line))
                await writer.drain()
        except (ConnectionResetError, BrokenPipeError):
            pass
        finally:
            self.connections -= 1
            try:
                writer.close()
                await writer.wait_closed()
            except (ConnectionResetError, BrokenPipeError, OSError):
                pass


def run_host_in_thread(sim: ArmSimulator, tcp_port: int = 0,
                       host: str = "127.0.0.1"):
    """Start an :class:`ArmHost` on a daemon thread with its own event
    loop; returns (host, bound_port, stop). Test/CLI convenience."""
    import threading

    ready = threading.Event()
    state: dict = {}

    def _run():
        loop = asyncio.new_event_loop()
        asyncio.set_event_loop(loop)
        arm_host = ArmHost(sim, tcp_port=tcp_port, host=host)
        loop.run_until_complete(arm_host.start())
        state["host"] = arm_host
        state["loop"] = loop
        state["port"] = arm_host.bound_port
        ready.set()
        try:
            loop.run_forever()
        finally:
            loop.run_until_complete(arm_host.stop())
            loop.close()

    thread = threading.Thread(target=_run, daemon=True)
    thread.start()
    if not ready.wait(timeout=5.0):
        raise RuntimeError("arm server thread failed to start")

    def stop():
        state["loop"].call_soon_threadsafe(state["loop"].stop)
        thread.join(timeout=5.0)

    return state["host"], state["port"], stop
