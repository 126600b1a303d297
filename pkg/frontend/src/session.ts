/**
 * Operator session over the WebSocket text channel: a strictly increasing
 * sequence counter, at most one in-flight command (extra clicks are
 * suppressed until ACK/ERR or the timeout), a 10 Hz state poll feeding a
 * 60-second ring buffer, and staleness detection when replies stop.
 *
 * The socket is injected as a line interface so the logic runs under
 * plain unit tests; the browser wiring adapts a WebSocket to it.
 */

import {
  AckMsg,
  Command,
  CommandName,
  Duration,
  ErrMsg,
  Speed,
  StateMsg,
  parse,
  serialize,
} from "./protocol.js";
import { RingBuffer } from "./ring.js";

export interface LineSocket {
  sendLine(line: string): void;
}

export interface StateSample {
  wallMs: number;       // console clock when the sample arrived
  state: StateMsg;
}

export type CommandOutcome =
  | { status: "ack"; seq: number }
  | { status: "err"; seq: number; code: number; text: string }
  | { status: "timeout"; seq: number };

export const POLL_INTERVAL_MS = 100;   // 10 Hz
export const COMMAND_TIMEOUT_MS = 1000;
export const STALE_AFTER_MS = 2000;
export const STATE_BUFFER_CAPACITY = 600;  // 60 s at 10 Hz

export class ConsoleSession {
  readonly states = new RingBuffer<StateSample>(STATE_BUFFER_CAPACITY);
  lastOutcome: CommandOutcome | null = null;
  private seq = 0;
  private pending: { seq: number; name: CommandName; sentAt: number } | null = null;
  private lastStateAt: number | null = null;
  private pollSeqs = new Set<number>();

  constructor(private socket: LineSocket, private now: () => number) {}

  nextSeq(): number {
    this.seq += 1;
    return this.seq;
  }

  get pendingCommand(): CommandName | null {
    return this.pending ? this.pending.name : null;
  }

  /** Send one joystick command; returns its seq, or null while another
   * command is still pending (double-clicks are suppressed). */
  sendCommand(name: CommandName, speed: Speed, duration: Duration): number | null {
    if (this.pending !== null) return null;
    const seq = this.nextSeq();
    const msg: Command = { kind: "CMD", seq, name, speed, duration };
    this.socket.sendLine(serialize(msg));
    this.pending = { seq, name, sentAt: this.now() };
    return seq;
  }

  /** Issue one GET STATE poll. */
  pollState(): number {
    const seq = this.nextSeq();
    this.pollSeqs.add(seq);
    this.socket.sendLine(serialize({ kind: "GET", seq }));
    return seq;
  }

  /** Feed one reply line from the socket. */
  handleLine(line: string): void {
    const msg = parse(line);
    if (msg.kind === "ACK") {
      this.resolvePending(msg);
    } else if (msg.kind === "ERR") {
      if (this.pending !== null) {
        this.lastOutcome = { status: "err", seq: this.pending.seq,
                             code: msg.code, text: msg.text };
        this.pending = null;
      } else {
        this.lastOutcome = { status: "err", seq: 0, code: msg.code, text: msg.text };
      }
    } else if (msg.kind === "STATE") {
      if (this.pollSeqs.delete(msg.seqEcho)) {
        this.lastStateAt = this.now();
        this.states.push({ wallMs: this.lastStateAt, state: msg });
      }
    }
  }

  private resolvePending(ack: AckMsg): void {
    if (this.pending !== null && ack.seqEcho === this.pending.seq) {
      this.lastOutcome = { status: "ack", seq: this.pending.seq };
      this.pending = null;
    }
  }

  /** Expire a pending command that outlived the reply timeout. */
  tick(): void {
    if (this.pending !== null && this.now() - this.pending.sentAt >= COMMAND_TIMEOUT_MS) {
      this.lastOutcome = { status: "timeout", seq: this.pending.seq };
      this.pending = null;
    }
  }

  /** True when no state reply arrived within the staleness window. */
  isStale(): boolean {
    if (this.lastStateAt === null) return true;
    return this.now() - this.lastStateAt >= STALE_AFTER_MS;
  }

  latestState(): StateMsg | null {
    const sample = this.states.last();
    return sample ? sample.state : null;
  }
}

export type { ErrMsg };
