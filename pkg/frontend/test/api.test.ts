import { describe, expect, it } from "vitest";

import { HttpApiClient, auditPayload } from "../src/api.js";

function fakeFetch(routes: Record<string, unknown>): typeof fetch {
  return (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const key = `${init?.method ?? "GET"} ${url}`;
    if (!(key in routes)) {
      return new Response(JSON.stringify({ error: "not found" }), { status: 404 });
    }
    return new Response(JSON.stringify(routes[key]), { status: 200 });
  }) as typeof fetch;
}

describe("payload audit", () => {
  it("accepts clean trial payloads", () => {
    auditPayload({ trial_id: "t0001", image_url: "/images/x" });
    auditPayload({ done: true, report_url: "/r" });
  });

  it("rejects ground-truth-like fields", () => {
    expect(() => auditPayload({ trial_id: "t", truth: "real" })).toThrow(/ground-truth/);
    expect(() => auditPayload({ Ground_Truth: 1 })).toThrow(/ground-truth/);
    expect(() => auditPayload({ image_file: "/srv/secret.png" })).toThrow();
  });
});

describe("http client", () => {
  it("hits the documented endpoints", async () => {
    const client = new HttpApiClient(
      "http://api",
      fakeFetch({
        "GET http://api/sessions/s1/next": { trial_id: "t0001", image_url: "/images/abc" },
        "GET http://api/sessions/s1/progress": {
          answered: 0, total: 4, kind: "realism", labels: ["real", "synthetic"],
        },
        "POST http://api/sessions/s1/responses": { status: "recorded" },
        "GET http://api/sessions/s1/report": { accuracy: 50 },
      }),
    );
    const next = await client.nextTrial("s1");
    expect(next).toEqual({ trial_id: "t0001", image_url: "/images/abc" });
    expect((await client.progress("s1")).total).toBe(4);
    await client.submit("s1", "t0001", "real");
    expect((await client.report("s1")).accuracy).toBe(50);
    expect(client.imageUrl("/images/abc")).toBe("http://api/images/abc");
  });

  it("raises on http errors so the flow can retry", async () => {
    const client = new HttpApiClient("http://api", fakeFetch({}));
    await expect(client.submit("s1", "t1", "real")).rejects.toThrow(/404/);
    await expect(client.nextTrial("s1")).rejects.toThrow(/404/);
  });

  it("refuses server payloads that leak ground truth", async () => {
    const client = new HttpApiClient(
      "http://api",
      fakeFetch({
        "GET http://api/sessions/s1/next": {
          trial_id: "t0001", image_url: "/x", truth: "synthetic",
        },
      }),
    );
    await expect(client.nextTrial("s1")).rejects.toThrow(/ground-truth/);
  });
});
