// Typed client for the visual-Turing-test HTTP API.
//
// The client only ever sees {trial_id, image_url} per trial plus the final
// report; defensive checks reject any payload that unexpectedly carries
// ground-truth-looking fields so a server bug cannot leak into the UI.

export interface TrialView {
  trial_id: string;
  image_url: string;
}

export interface DoneMarker {
  done: true;
  report_url: string;
}

export interface Progress {
  answered: number;
  total: number;
  kind: "realism" | "progression" | "regression";
  labels: [string, string];
}

export type Report = Record<string, number | string | boolean | null>;

export interface ApiClient {
  nextTrial(sessionId: string): Promise<TrialView | DoneMarker>;
  progress(sessionId: string): Promise<Progress>;
  submit(sessionId: string, trialId: string, answer: string): Promise<void>;
  report(sessionId: string): Promise<Report>;
  imageUrl(path: string): string;
}

const FORBIDDEN_FIELDS = ["truth", "ground_truth", "label_true", "image_file"];

export function auditPayload(payload: unknown): void {
  if (payload === null || typeof payload !== "object") return;
  for (const key of Object.keys(payload as object)) {
    const lower = key.toLowerCase();
    if (FORBIDDEN_FIELDS.some((f) => lower.includes(f))) {
      throw new Error(`refusing payload with ground-truth-like field '${key}'`);
    }
  }
}

export function isDone(t: TrialView | DoneMarker): t is DoneMarker {
  return (t as DoneMarker).done === true;
}

export class HttpApiClient implements ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async getJson(path: string): Promise<unknown> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) {
      throw new Error(`GET ${path} failed: ${resp.status}`);
    }
    const payload = await resp.json();
    auditPayload(payload);
    return payload;
  }

  async nextTrial(sessionId: string): Promise<TrialView | DoneMarker> {
    return (await this.getJson(`/sessions/${sessionId}/next`)) as
      | TrialView
      | DoneMarker;
  }

  async progress(sessionId: string): Promise<Progress> {
    return (await this.getJson(`/sessions/${sessionId}/progress`)) as Progress;
  }

  async submit(sessionId: string, trialId: string, answer: string): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/responses`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ trial_id: trialId, answer }),
    });
    // 409 means a contradictory answer was recorded earlier; surface it
    if (!resp.ok) {
      throw new Error(`submit failed: ${resp.status}`);
    }
  }

  async report(sessionId: string): Promise<Report> {
    return (await this.getJson(`/sessions/${sessionId}/report`)) as Report;
  }

  imageUrl(path: string): string {
    return this.baseUrl + path;
  }
}
