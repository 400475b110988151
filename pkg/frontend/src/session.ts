// Session flow state machine, kept free of DOM so it can be tested directly.
//
// The server is the source of truth: after a reload the flow resumes at the
// first unanswered trial simply by asking for the next one.  A submission
// that fails on a network error is retried until acknowledged; the server's
// idempotency makes retries safe.

import { ApiClient, Progress, Report, TrialView, isDone } from "./api.js";

export interface ViewHooks {
  showTrial(trial: TrialView, progress: Progress): void;
  showReport(report: Report, progress: Progress): void;
  showError(message: string): void;
}

export const CHOICE_LABELS: Record<Progress["kind"], [string, string]> = {
  realism: ["Real", "Synthetic"],
  progression: ["Real", "Age-progressed"],
  regression: ["Real", "Age-regressed"],
};

const RETRY_DELAY_MS = 800;
const MAX_RETRIES = 20;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class SessionFlow {
  private current: TrialView | null = null;
  private progressInfo: Progress | null = null;
  private finished = false;

  constructor(
    private api: ApiClient,
    private sessionId: string,
    private view: ViewHooks,
    private retryDelayMs: number = RETRY_DELAY_MS,
  ) {}

  get currentTrial(): TrialView | null {
    return this.current;
  }

  get progress(): Progress | null {
    return this.progressInfo;
  }

  get isFinished(): boolean {
    return this.finished;
  }

  async start(): Promise<void> {
    this.progressInfo = await this.api.progress(this.sessionId);
    await this.advance();
  }

  private async advance(): Promise<void> {
    const next = await this.api.nextTrial(this.sessionId);
    if (isDone(next)) {
      this.current = null;
      this.finished = true;
      const report = await this.api.report(this.sessionId);
      this.view.showReport(report, this.progressInfo!);
      return;
    }
    this.current = next;
    this.view.showTrial(next, this.progressInfo!);
  }

  /** Record the rater's forced choice for the trial on screen. */
  async answer(choiceIndex: 0 | 1): Promise<void> {
    if (this.current === null || this.progressInfo === null) return;
    const trial = this.current;
    const answer = this.progressInfo.labels[choiceIndex];
    await this.submitWithRetry(trial.trial_id, answer);
    this.progressInfo = {
      ...this.progressInfo,
      answered: this.progressInfo.answered + 1,
    };
    await this.advance();
  }

  // keep retrying until the server acknowledges; the response stays cached
  // here, and server-side idempotency makes a replay of an already-recorded
  // answer a no-op
  private async submitWithRetry(trialId: string, answer: string): Promise<void> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt < MAX_RETRIES; attempt++) {
      try {
        await this.api.submit(this.sessionId, trialId, answer);
        return;
      } catch (err) {
        lastError = err;
        await sleep(this.retryDelayMs);
      }
    }
    this.view.showError(`could not record answer after ${MAX_RETRIES} tries: ${lastError}`);
    throw lastError;
  }
}

/** Table-2/3-shaped column order for the final report view. */
export function reportColumns(kind: Progress["kind"]): string[] {
  if (kind === "realism") {
    return ["accuracy", "r_as_r", "r_as_s", "s_as_r", "s_as_s"];
  }
  return ["accuracy", "progression", "regression"];
}

export const COLUMN_TITLES: Record<string, string> = {
  accuracy: "Accuracy",
  r_as_r: "R as R",
  r_as_s: "R as S",
  s_as_r: "S as R",
  s_as_s: "S as S",
  progression: "Progression",
  regression: "Regression",
};
