/** REST control plane client (sequences, telemetry trace, latency). */

export interface SequenceStep {
  name: string;
  speed: string;
  duration: string;
  offset_ms: number;
}

export interface SequenceInfo {
  name: string;
  steps: SequenceStep[];
}

export interface TraceRow {
  t_ms: number;
  requested_mm: number;
  actual_mm: number;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body !== undefined ? { "content-type": "application/json" } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail = (payload as { detail?: string }).detail ?? response.statusText;
      throw new Error(`${response.status} ${detail}`);
    }
    return payload as T;
  }

  listSequences(): Promise<{ sequences: SequenceInfo[]; recording: string | null }> {
    return this.request("GET", "/api/sequences");
  }

  startRecording(name: string): Promise<unknown> {
    return this.request("POST", "/api/sequences/record", { name });
  }

  stopRecording(): Promise<SequenceInfo> {
    return this.request("POST", "/api/sequences/record/stop");
  }

  replaySequence(name: string): Promise<unknown> {
    return this.request("POST", `/api/sequences/${encodeURIComponent(name)}/replay`);
  }

  renameSequence(name: string, newName: string): Promise<unknown> {
    return this.request("POST", `/api/sequences/${encodeURIComponent(name)}/rename`,
                        { new_name: newName });
  }

  deleteSequence(name: string): Promise<unknown> {
    return this.request("DELETE", `/api/sequences/${encodeURIComponent(name)}`);
  }

  trace(sinceMs: number): Promise<{ rows: TraceRow[] }> {
    return this.request("GET", `/api/trace?since_ms=${sinceMs}`);
  }

  latency(): Promise<{ command_ms: number; feedback_ms: number }> {
    return this.request("GET", "/api/latency");
  }
}
