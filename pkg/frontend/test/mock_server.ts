// In-memory stand-in implementing the service contract: seeded trial order,
// idempotent submissions, conflicts on contradiction, replay-based scoring.

import { ApiClient, DoneMarker, Progress, Report, TrialView } from "../src/api.js";

export interface MockTrial {
  trial_id: string;
  truth: string;
}

export class MockServer implements ApiClient {
  responses = new Map<string, string>();
  submitCalls = 0;
  failNextSubmits = 0;

  constructor(
    public kind: Progress["kind"],
    public trials: MockTrial[],
    public labels: [string, string],
  ) {}

  async nextTrial(_sessionId: string): Promise<TrialView | DoneMarker> {
    const open = this.trials.find((t) => !this.responses.has(t.trial_id));
    if (!open) return { done: true, report_url: "/report" };
    return { trial_id: open.trial_id, image_url: `/images/tok-${open.trial_id}` };
  }

  async progress(_sessionId: string): Promise<Progress> {
    return {
      answered: this.responses.size,
      total: this.trials.length,
      kind: this.kind,
      labels: this.labels,
    };
  }

  async submit(_sessionId: string, trialId: string, answer: string): Promise<void> {
    this.submitCalls += 1;
    if (this.failNextSubmits > 0) {
      this.failNextSubmits -= 1;
      throw new Error("network down");
    }
    const prev = this.responses.get(trialId);
    if (prev !== undefined && prev !== answer) {
      throw new Error("submit failed: 409");
    }
    this.responses.set(trialId, answer);
  }

  async report(_sessionId: string): Promise<Report> {
    const [realLabel, synLabel] = this.labels;
    const reals = this.trials.filter((t) => t.truth === realLabel);
    const syns = this.trials.filter((t) => t.truth === synLabel);
    const rAsR = reals.filter((t) => this.responses.get(t.trial_id) === realLabel).length;
    const sAsS = syns.filter((t) => this.responses.get(t.trial_id) === synLabel).length;
    const pct = (num: number, den: number) => Math.round((100 * num) / den);
    const accuracy = pct(rAsR + sAsS, this.trials.length);
    if (this.kind === "realism") {
      return {
        kind: this.kind,
        accuracy,
        r_as_r: pct(rAsR, reals.length),
        r_as_s: pct(reals.length - rAsR, reals.length),
        s_as_r: pct(syns.length - sAsS, syns.length),
        s_as_s: pct(sAsS, syns.length),
      };
    }
    return {
      kind: this.kind,
      accuracy,
      progression: this.kind === "progression" ? accuracy : null,
      regression: this.kind === "regression" ? accuracy : null,
    };
  }

  imageUrl(path: string): string {
    return path;
  }
}

export function makeRealismServer(nPerClass: number): MockServer {
  const trials: MockTrial[] = [];
  for (let i = 0; i < nPerClass * 2; i++) {
    trials.push({ trial_id: `t${String(i).padStart(4, "0")}`, truth: i % 2 ? "synthetic" : "real" });
  }
  return new MockServer("realism", trials, ["real", "synthetic"]);
}
