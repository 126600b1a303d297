import { beforeEach, describe, expect, it } from "vitest";

import { parse, serialize } from "../src/protocol.js";
import {
  COMMAND_TIMEOUT_MS,
  ConsoleSession,
  STALE_AFTER_MS,
} from "../src/session.js";

class FakeSocket {
  sent: string[] = [];
  sendLine(line: string): void {
    this.sent.push(line);
  }
}

let now = 0;
let socket: FakeSocket;
let session: ConsoleSession;

beforeEach(() => {
  now = 0;
  socket = new FakeSocket();
  session = new ConsoleSession(socket, () => now);
});

describe("command sending", () => {
  it("emits a canonical CMD line that parses under the shared grammar", () => {
    session.sendCommand("Forward", "High", "Long");
    expect(socket.sent).toHaveLength(1);
    const msg = parse(socket.sent[0]);
    expect(msg).toEqual({ kind: "CMD", seq: 1, name: "Forward", speed: "High", duration: "Long" });
  });

  it("suppresses a second command while one is pending", () => {
    expect(session.sendCommand("Forward", "Low", "Short")).toBe(1);
    expect(session.sendCommand("Backward", "Low", "Short")).toBeNull();
    expect(socket.sent).toHaveLength(1);
    session.handleLine("ACK 1\n");
    expect(session.sendCommand("Backward", "Low", "Short")).toBe(2);
  });

  it("resolves on ACK", () => {
    session.sendCommand("Up", "Low", "Short");
    session.handleLine("ACK 1\n");
    expect(session.pendingCommand).toBeNull();
    expect(session.lastOutcome).toEqual({ status: "ack", seq: 1 });
  });

  it("surfaces ERR verbatim", () => {
    session.sendCommand("Up", "Low", "Short");
    session.handleLine("ERR 409 Up needs Arm mode\n");
    expect(session.lastOutcome).toEqual({
      status: "err", seq: 1, code: 409, text: "Up needs Arm mode",
    });
  });

  it("times out after one second without a reply", () => {
    session.sendCommand("Left", "Low", "Short");
    now += COMMAND_TIMEOUT_MS - 1;
    session.tick();
    expect(session.pendingCommand).toBe("Left");
    now += 1;
    session.tick();
    expect(session.pendingCommand).toBeNull();
    expect(session.lastOutcome).toEqual({ status: "timeout", seq: 1 });
  });

  it("uses strictly increasing sequence numbers across message kinds", () => {
    session.sendCommand("Forward", "Low", "Short");
    session.handleLine("ACK 1\n");
    session.pollState();
    session.sendCommand("Backward", "Low", "Short");
    const seqs = socket.sent.map((line) => Number(line.split(/\s+/)[1]));
    expect(seqs).toEqual([1, 2, 3]);
  });
});

describe("state polling", () => {
  it("buffers only STATE replies that echo its own polls", () => {
    const seq = session.pollState();
    session.handleLine(`STATE ${seq} 500 1.000 2.000 3.000\n`);
    session.handleLine("STATE 999 600 4.000 4.000 8.000\n");   // someone else's
    expect(session.states.size).toBe(1);
    expect(session.latestState()?.apertureMm).toBe(3.0);
  });

  it("keeps at most 60 seconds of samples (600 at 10 Hz)", () => {
    for (let k = 0; k < 700; k++) {
      const seq = session.pollState();
      now += 100;
      session.handleLine(`STATE ${seq} ${k} 1.000 1.000 2.000\n`);
    }
    expect(session.states.size).toBe(600);
    expect(session.states.get(0)?.state.tMs).toBe(100n);
  });

  it("reports a stale feed when replies stop", () => {
    const seq = session.pollState();
    session.handleLine(`STATE ${seq} 0 1.000 1.000 2.000\n`);
    expect(session.isStale()).toBe(false);
    now += STALE_AFTER_MS;
    expect(session.isStale()).toBe(true);
  });

  it("emits GET lines the server grammar accepts", () => {
    session.pollState();
    expect(socket.sent[0]).toBe(serialize({ kind: "GET", seq: 1 }));
  });
});
