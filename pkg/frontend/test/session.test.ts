import { describe, expect, it } from "vitest";

import { Progress, Report, TrialView } from "../src/api.js";
import { CHOICE_LABELS, SessionFlow, reportColumns } from "../src/session.js";
import { makeRealismServer } from "./mock_server.js";

class RecordingView {
  trials: Array<{ trial: TrialView; progress: Progress }> = [];
  reports: Report[] = [];
  errors: string[] = [];
  storedKeys = new Set<string>();

  showTrial(trial: TrialView, progress: Progress): void {
    Object.keys(trial).forEach((k) => this.storedKeys.add(k));
    this.trials.push({ trial, progress });
  }
  showReport(report: Report, progress: Progress): void {
    this.reports.push(report);
    void progress;
  }
  showError(message: string): void {
    this.errors.push(message);
  }
}

describe("session flow", () => {
  it("completes a 20-trial realism session and shows the report", async () => {
    const server = makeRealismServer(10);
    const view = new RecordingView();
    const flow = new SessionFlow(server, "s1", view, 0);
    await flow.start();

    let guard = 0;
    while (!flow.isFinished && guard++ < 50) {
      await flow.answer(guard % 2 === 0 ? 0 : 1);
    }
    expect(flow.isFinished).toBe(true);
    expect(view.trials.length).toBe(20);
    expect(view.reports.length).toBe(1);
    expect(server.responses.size).toBe(20);
    // displayed report equals the server's answer exactly
    expect(view.reports[0]).toEqual(await server.report("s1"));
  });

  it("resumes at the first unanswered trial after a reload", async () => {
    const server = makeRealismServer(5);
    const first = new SessionFlow(server, "s1", new RecordingView(), 0);
    await first.start();
    for (let i = 0; i < 4; i++) await first.answer(0);

    // a page reload constructs a fresh flow over the same server state
    const view = new RecordingView();
    const resumed = new SessionFlow(server, "s1", view, 0);
    await resumed.start();
    expect(view.trials[0].progress.answered).toBe(4);
    expect(view.trials[0].trial.trial_id).toBe("t0004");
    // no acknowledged judgment was lost
    expect(server.responses.size).toBe(4);
  });

  it("retries failed submissions without double-recording", async () => {
    const server = makeRealismServer(2);
    const view = new RecordingView();
    const flow = new SessionFlow(server, "s1", view, 0);
    await flow.start();

    server.failNextSubmits = 2;
    await flow.answer(1);
    expect(server.submitCalls).toBe(3); // two failures, one success
    expect(server.responses.size).toBe(1);
    expect([...server.responses.values()]).toEqual(["synthetic"]);
    expect(view.errors).toEqual([]);
  });

  it("stores nothing beyond the client trial view fields", async () => {
    const server = makeRealismServer(3);
    const view = new RecordingView();
    const flow = new SessionFlow(server, "s1", view, 0);
    await flow.start();
    while (!flow.isFinished) await flow.answer(0);
    expect([...view.storedKeys].sort()).toEqual(["image_url", "trial_id"]);
  });

  it("answers map to the session kind's labels", async () => {
    const server = makeRealismServer(1);
    server.kind = "progression";
    server.labels = ["real", "progressed"];
    const flow = new SessionFlow(server, "s1", new RecordingView(), 0);
    await flow.start();
    await flow.answer(1);
    expect([...server.responses.values()]).toEqual(["progressed"]);
  });
});

describe("report layout", () => {
  it("matches the two table shapes", () => {
    expect(reportColumns("realism")).toEqual([
      "accuracy", "r_as_r", "r_as_s", "s_as_r", "s_as_s",
    ]);
    expect(reportColumns("progression")).toEqual([
      "accuracy", "progression", "regression",
    ]);
    expect(reportColumns("regression")).toEqual([
      "accuracy", "progression", "regression",
    ]);
  });

  it("labels the forced choice per kind", () => {
    expect(CHOICE_LABELS.realism).toEqual(["Real", "Synthetic"]);
    expect(CHOICE_LABELS.progression).toEqual(["Real", "Age-progressed"]);
    expect(CHOICE_LABELS.regression).toEqual(["Real", "Age-regressed"]);
  });
});
