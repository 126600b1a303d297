/**
 * DOM wiring: command grid, speed/duration latches, live
 * requested-vs-actual chart with a lag readout, and sequence
 * record/replay controls. Server address comes from the ?server= query
 * parameter (default localhost:7421).
 */

import { ApiClient, TraceRow } from "./api.js";
import { drawChart } from "./chart.js";
import { GRID_LABELS, commandGrid } from "./grid.js";
import { measureLag } from "./lag.js";
import { CommandName, Duration, Speed } from "./protocol.js";
import { ConsoleSession, POLL_INTERVAL_MS } from "./session.js";

const params = new URLSearchParams(window.location.search);
const serverParam = params.get("server") ?? `${window.location.hostname || "localhost"}:7421`;
const httpBase = serverParam.startsWith("http") ? serverParam : `http://${serverParam}`;
const wsUrl = httpBase.replace(/^http/, "ws") + "/ws";

const api = new ApiClient(httpBase);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let speed: Speed = "Low";
let duration: Duration = "Short";
let session: ConsoleSession | null = null;

const traceRows: TraceRow[] = [];
let lastTraceMs = -1;

function connect(): void {
  const ws = new WebSocket(wsUrl);
  const statusEl = el<HTMLSpanElement>("conn-status");
  statusEl.textContent = "connecting";
  ws.onopen = () => {
    statusEl.textContent = `connected to ${wsUrl}`;
    statusEl.className = "ok";
    session = new ConsoleSession({ sendLine: (line) => ws.send(line) },
                                 () => performance.now());
  };
  ws.onmessage = (ev) => {
    if (session) {
      for (const line of String(ev.data).split("\n")) {
        if (line.trim()) session.handleLine(line);
      }
    }
  };
  ws.onclose = () => {
    statusEl.textContent = "disconnected — retrying";
    statusEl.className = "bad";
    session = null;
    setTimeout(connect, 1000);
  };
}

function buildGrid(): void {
  const grid = el<HTMLDivElement>("command-grid");
  for (const row of commandGrid()) {
    for (const name of row) {
      const button = document.createElement("button");
      button.textContent = GRID_LABELS[name];
      button.title = name;
      button.dataset.command = name;
      button.onclick = () => issueCommand(name, button);
      grid.appendChild(button);
    }
  }
}

function issueCommand(name: CommandName, button: HTMLButtonElement): void {
  if (!session) return;
  const seq = session.sendCommand(name, speed, duration);
  if (seq === null) return;   // another command still pending
  button.disabled = true;
  const watch = window.setInterval(() => {
    if (!session) { window.clearInterval(watch); button.disabled = false; return; }
    session.tick();
    if (session.pendingCommand === null) {
      window.clearInterval(watch);
      button.disabled = false;
      const outcome = session.lastOutcome;
      const label = el<HTMLSpanElement>("cmd-status");
      if (outcome?.status === "ack") {
        label.textContent = `${name} acknowledged`;
        label.className = "ok";
      } else if (outcome?.status === "err") {
        label.textContent = `${name}: ERR ${outcome.code} ${outcome.text}`;
        label.className = "bad";
      } else {
        label.textContent = `${name}: timed out`;
        label.className = "bad";
      }
    }
  }, 50);
}

function wireLatches(): void {
  const speedEl = el<HTMLSelectElement>("speed");
  const durEl = el<HTMLSelectElement>("duration");
  speedEl.onchange = () => { speed = speedEl.value as Speed; };
  durEl.onchange = () => { duration = durEl.value as Duration; };
}

async function refreshSequences(): Promise<void> {
  const listing = await api.listSequences().catch(() => null);
  if (!listing) return;
  const list = el<HTMLUListElement>("sequence-list");
  list.innerHTML = "";
  for (const seq of listing.sequences) {
    const item = document.createElement("li");
    item.textContent = `${seq.name} (${seq.steps.length} steps) `;
    const replay = document.createElement("button");
    replay.textContent = "replay";
    replay.onclick = () =>
      api.replaySequence(seq.name).catch((e) => reportSequenceError(e));
    const del = document.createElement("button");
    del.textContent = "delete";
    del.onclick = () => api.deleteSequence(seq.name).then(refreshSequences);
    item.append(replay, del);
    list.appendChild(item);
  }
  el<HTMLSpanElement>("record-status").textContent =
    listing.recording ? `recording "${listing.recording}"` : "idle";
}

function reportSequenceError(e: unknown): void {
  el<HTMLSpanElement>("record-status").textContent = String(e);
}

function wireSequenceControls(): void {
  el<HTMLButtonElement>("record-start").onclick = () => {
    const name = el<HTMLInputElement>("record-name").value.trim();
    if (!name) return;
    api.startRecording(name).then(refreshSequences, reportSequenceError);
  };
  el<HTMLButtonElement>("record-stop").onclick = () => {
    api.stopRecording().then(refreshSequences, reportSequenceError);
  };
  window.setInterval(refreshSequences, 2000);
}

async function pumpTrace(): Promise<void> {
  const batch = await api.trace(lastTraceMs).catch(() => null);
  if (!batch) return;
  for (const row of batch.rows) {
    traceRows.push(row);
    lastTraceMs = row.t_ms;
  }
  const horizon = lastTraceMs - 60_000;
  while (traceRows.length && traceRows[0].t_ms < horizon) traceRows.shift();
}

function updateStatePanel(): void {
  if (!session) return;
  session.tick();
  session.pollState();
  const state = session.latestState();
  if (state) {
    el<HTMLSpanElement>("aperture").textContent = state.apertureMm.toFixed(3);
    el<HTMLSpanElement>("fingers").textContent =
      `${state.indexMm.toFixed(3)} / ${state.thumbMm.toFixed(3)}`;
  }
}

function redraw(): void {
  const canvas = el<HTMLCanvasElement>("chart");
  const requested = traceRows.map((r) => ({ t: r.t_ms, v: r.requested_mm }));
  const actual = traceRows.map((r) => ({ t: r.t_ms, v: r.actual_mm }));
  drawChart(canvas, [
    { label: "requested", color: "#4ea1ff", points: requested },
    { label: "actual", color: "#ffb454", points: actual },
  ], 30_000, session ? session.isStale() : true);

  const lagEl = el<HTMLSpanElement>("lag");
  if (traceRows.length >= 50) {
    const tail = traceRows.slice(-600);
    const period = (tail[tail.length - 1].t_ms - tail[0].t_ms) / (tail.length - 1);
    try {
      const est = measureLag(tail.map((r) => r.requested_mm),
                             tail.map((r) => r.actual_mm), period);
      lagEl.textContent = est.confident
        ? `${est.lagMs.toFixed(0)} ms (r=${est.peakCorrelation.toFixed(2)})`
        : "low confidence";
    } catch {
      lagEl.textContent = "n/a";
    }
  }
}

buildGrid();
wireLatches();
wireSequenceControls();
connect();
window.setInterval(updateStatePanel, POLL_INTERVAL_MS);
window.setInterval(pumpTrace, 500);
window.setInterval(redraw, 250);
