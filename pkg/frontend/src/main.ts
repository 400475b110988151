// DOM wiring: one image, two buttons, arrow-key shortcuts, report table.
//
// The session id comes from the ?session= query parameter; the API origin
// defaults to the page's own origin (the service can serve these assets).

import { HttpApiClient, Progress, Report, TrialView } from "./api.js";
import { CHOICE_LABELS, COLUMN_TITLES, SessionFlow, reportColumns } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setup(): void {
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  const base = params.get("server") ?? "";
  if (!sessionId) {
    el("status").textContent =
      "No session. Open this page as ?session=<id> (sessions are created via the CLI/API).";
    return;
  }

  const api = new HttpApiClient(base);
  const image = el<HTMLImageElement>("trial-image");
  const buttonA = el<HTMLButtonElement>("choice-0");
  const buttonB = el<HTMLButtonElement>("choice-1");
  const status = el("status");
  const reportBox = el("report");

  const view = {
    showTrial(trial: TrialView, progress: Progress): void {
      // image shown as-is: no client-side contrast or enhancement
      image.src = api.imageUrl(trial.image_url);
      image.hidden = false;
      const [a, b] = CHOICE_LABELS[progress.kind];
      buttonA.textContent = `${a} (←)`;
      buttonB.textContent = `${b} (→)`;
      buttonA.disabled = buttonB.disabled = false;
      status.textContent = `Image ${progress.answered + 1} of ${progress.total}`;
    },
    showReport(report: Report, progress: Progress): void {
      image.hidden = true;
      buttonA.hidden = buttonB.hidden = true;
      status.textContent = `Session complete: ${progress.total} judgments recorded.`;
      const cols = reportColumns(progress.kind);
      const header = cols.map((c) => `<th>${COLUMN_TITLES[c]}</th>`).join("");
      const cells = cols
        .map((c) => `<td>${report[c] === null ? "—" : report[c] + "%"}</td>`)
        .join("");
      reportBox.innerHTML = `<table><tr>${header}</tr><tr>${cells}</tr></table>`;
      reportBox.hidden = false;
    },
    showError(message: string): void {
      status.textContent = message;
    },
  };

  const flow = new SessionFlow(api, sessionId, view);

  const choose = (index: 0 | 1) => {
    if (flow.isFinished || !flow.currentTrial) return;
    buttonA.disabled = buttonB.disabled = true;
    flow.answer(index).catch((err) => view.showError(String(err)));
  };
  buttonA.addEventListener("click", () => choose(0));
  buttonB.addEventListener("click", () => choose(1));
  // raters classify up to 100 images; arrow keys keep that fast
  window.addEventListener("keydown", (event) => {
    if (event.key === "ArrowLeft") {
      event.preventDefault();
      choose(0);
    } else if (event.key === "ArrowRight") {
      event.preventDefault();
      choose(1);
    }
  });

  flow.start().catch((err) => view.showError(String(err)));
}

setup();
