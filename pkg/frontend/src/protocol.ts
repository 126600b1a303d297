/**
 * Wire grammar shared with the arm server: one ASCII line per message,
 * LF-terminated, tokens separated by runs of spaces. This mirrors the
 * server codec exactly — every line the console emits must parse on the
 * other side, and canonical lines re-serialize byte-identically.
 */

export const COMMAND_NAMES = [
  "OnOff", "Forward", "ForwardLeft", "ForwardRight",
  "Backward", "BackwardLeft", "BackwardRight", "Up",
  "Down", "Left", "Right", "HandArmSwitch",
  "LowSpeed", "HighSpeed", "ShortAction", "LongAction",
] as const;

export type CommandName = (typeof COMMAND_NAMES)[number];
export type Speed = "Low" | "High";
export type Duration = "Short" | "Long";
export type Mode = "Hand" | "Arm";

export const MAX_SEQ = 0xffffffff;
export const MAX_T_MS = 2n ** 64n - 1n;
export const MAX_DISTANCE_MM = 1000.0;
export const MAX_LINE_BYTES = 128;

export interface Target {
  kind: "TARGET";
  seq: number;
  tMs: bigint;
  distanceMm: number;
}

export interface Command {
  kind: "CMD";
  seq: number;
  name: CommandName;
  speed: Speed;
  duration: Duration;
}

export interface ModeSwitch {
  kind: "MODE";
  seq: number;
  mode: Mode;
}

export interface StateQuery {
  kind: "GET";
  seq: number;
}

export interface StateMsg {
  kind: "STATE";
  seqEcho: number;
  tMs: bigint;
  indexMm: number;
  thumbMm: number;
  apertureMm: number;
}

export interface AckMsg {
  kind: "ACK";
  seqEcho: number;
}

export interface ErrMsg {
  kind: "ERR";
  code: number;
  text: string;
}

export type WireMessage =
  | Target | Command | ModeSwitch | StateQuery | StateMsg | AckMsg | ErrMsg;

export class WireParseError extends Error {
  constructor(message: string, readonly line: string) {
    super(`${message}: ${JSON.stringify(line)}`);
    this.name = "WireParseError";
  }
}

function checkSeq(seq: number): number {
  if (!Number.isInteger(seq) || seq < 0 || seq > MAX_SEQ) {
    throw new Error(`seq ${seq} outside u32 range`);
  }
  return seq;
}

function mm3(value: number, limit = MAX_DISTANCE_MM): string {
  if (!(value >= 0 && value < limit)) {
    throw new Error(`distance ${value} outside [0, ${limit}) mm`);
  }
  return value.toFixed(3);
}

export function serialize(msg: WireMessage): string {
  let line: string;
  switch (msg.kind) {
    case "TARGET":
      line = `TARGET ${checkSeq(msg.seq)} ${msg.tMs} ${mm3(msg.distanceMm)}`;
      break;
    case "CMD":
      if (!COMMAND_NAMES.includes(msg.name)) {
        throw new Error(`unknown command ${msg.name}`);
      }
      line = `CMD ${checkSeq(msg.seq)} ${msg.name} ${msg.speed} ${msg.duration}`;
      break;
    case "MODE":
      line = `MODE ${checkSeq(msg.seq)} ${msg.mode}`;
      break;
    case "GET":
      line = `GET ${checkSeq(msg.seq)} STATE`;
      break;
    case "STATE":
      line = `STATE ${checkSeq(msg.seqEcho)} ${msg.tMs} ${mm3(msg.indexMm)} ` +
        `${mm3(msg.thumbMm)} ${mm3(msg.apertureMm, 2 * MAX_DISTANCE_MM)}`;
      break;
    case "ACK":
      line = `ACK ${checkSeq(msg.seqEcho)}`;
      break;
    case "ERR": {
      const text = msg.text.split(/\s+/).filter(Boolean).join(" ");
      line = text ? `ERR ${msg.code} ${text}` : `ERR ${msg.code}`;
      break;
    }
  }
  const out = line + "\n";
  if (out.length > MAX_LINE_BYTES) {
    throw new Error(`serialized line exceeds ${MAX_LINE_BYTES} bytes`);
  }
  return out;
}

function parseUint(token: string, limit: number, what: string, line: string): number {
  if (!/^\d+$/.test(token)) {
    throw new WireParseError(`${what} must be an unsigned integer`, line);
  }
  const value = Number(token);
  if (value > limit) {
    throw new WireParseError(`${what} ${token} out of range`, line);
  }
  return value;
}

function parseU64(token: string, what: string, line: string): bigint {
  if (!/^\d+$/.test(token)) {
    throw new WireParseError(`${what} must be an unsigned integer`, line);
  }
  const value = BigInt(token);
  if (value > MAX_T_MS) {
    throw new WireParseError(`${what} ${token} out of range`, line);
  }
  return value;
}

function parseMm(token: string, line: string, limit = MAX_DISTANCE_MM): number {
  if (!/^[0-9.eE+\-]+$/.test(token)) {
    throw new WireParseError(`bad decimal ${token}`, line);
  }
  const value = Number(token);
  if (!(value >= 0 && value < limit)) {
    throw new WireParseError(`distance ${token} out of range`, line);
  }
  return value;
}

export function parse(line: string): WireMessage {
  if (!/^[\x00-\x7f]*$/.test(line)) {
    throw new WireParseError("non-ASCII bytes on the wire", line);
  }
  const tokens = line.split(/\s+/).filter(Boolean);
  if (tokens.length === 0) {
    throw new WireParseError("empty line", line);
  }
  const [verb, ...args] = tokens;
  switch (verb) {
    case "TARGET": {
      if (args.length !== 3) throw new WireParseError("TARGET takes seq t_ms dist", line);
      return {
        kind: "TARGET",
        seq: parseUint(args[0], MAX_SEQ, "seq", line),
        tMs: parseU64(args[1], "t_ms", line),
        distanceMm: parseMm(args[2], line),
      };
    }
    case "CMD": {
      if (args.length !== 4) throw new WireParseError("CMD takes seq name speed dur", line);
      const seq = parseUint(args[0], MAX_SEQ, "seq", line);
      const [, name, speed, duration] = args;
      if (!(COMMAND_NAMES as readonly string[]).includes(name)) {
        throw new WireParseError(`unknown command ${name}`, line);
      }
      if (speed !== "Low" && speed !== "High") {
        throw new WireParseError(`unknown speed ${speed}`, line);
      }
      if (duration !== "Short" && duration !== "Long") {
        throw new WireParseError(`unknown duration ${duration}`, line);
      }
      return { kind: "CMD", seq, name: name as CommandName, speed, duration };
    }
    case "MODE": {
      if (args.length !== 2) throw new WireParseError("MODE takes seq Hand|Arm", line);
      const seq = parseUint(args[0], MAX_SEQ, "seq", line);
      if (args[1] !== "Hand" && args[1] !== "Arm") {
        throw new WireParseError(`unknown mode ${args[1]}`, line);
      }
      return { kind: "MODE", seq, mode: args[1] };
    }
    case "GET": {
      if (args.length !== 2 || args[1] !== "STATE") {
        throw new WireParseError("GET takes seq STATE", line);
      }
      return { kind: "GET", seq: parseUint(args[0], MAX_SEQ, "seq", line) };
    }
    case "STATE": {
      if (args.length !== 5) throw new WireParseError("STATE takes seq_echo t_ms i t a", line);
      return {
        kind: "STATE",
        seqEcho: parseUint(args[0], MAX_SEQ, "seq_echo", line),
        tMs: parseU64(args[1], "t_ms", line),
        indexMm: parseMm(args[2], line),
        thumbMm: parseMm(args[3], line),
        apertureMm: parseMm(args[4], line, 2 * MAX_DISTANCE_MM),
      };
    }
    case "ACK": {
      if (args.length !== 1) throw new WireParseError("ACK takes seq_echo", line);
      return { kind: "ACK", seqEcho: parseUint(args[0], MAX_SEQ, "seq_echo", line) };
    }
    case "ERR": {
      if (args.length < 1) throw new WireParseError("ERR takes code text...", line);
      const code = parseUint(args[0], 599, "code", line);
      if (code < 100) throw new WireParseError(`ERR code ${code} out of range`, line);
      return { kind: "ERR", code, text: args.slice(1).join(" ") };
    }
    default:
      throw new WireParseError(`unknown verb ${verb}`, line);
  }
}
