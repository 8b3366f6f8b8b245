import { describe, expect, it } from "vitest";

import { ApiError, DiagidClient } from "../src/api.js";
import type { RecommendationPayload } from "../src/api.js";

interface Recorded {
  url: string;
  method: string;
  body: unknown;
}

function fakeFetch(
  status: number,
  payload: unknown,
  calls: Recorded[],
): (url: string, init?: RequestInit) => Promise<Response> {
  return async (url, init) => {
    calls.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(init.body as string) : undefined,
    });
    return new Response(JSON.stringify(payload) + "\n", { status });
  };
}

const REC: RecommendationPayload = {
  model_time: "t1",
  decision: null,
  sensitivity: null,
  trace: null,
};

describe("DiagidClient", () => {
  it("strips trailing slashes from the base url", async () => {
    const calls: Recorded[] = [];
    const client = new DiagidClient(
      "http://host:1234///",
      fakeFetch(200, { text: "time t1 t2" }, calls),
    );
    await client.kbText();
    expect(calls[0]!.url).toBe("http://host:1234/kb");
  });

  it("creates sessions with and without truth", async () => {
    const calls: Recorded[] = [];
    const client = new DiagidClient(
      "http://h",
      fakeFetch(201, { id: "s1" }, calls),
    );
    expect(await client.createSession()).toBe("s1");
    expect(calls[0]).toEqual({
      url: "http://h/sessions",
      method: "POST",
      body: {},
    });
    await client.createSession({ DC: "faulty" });
    expect(calls[1]!.body).toEqual({ truth: { DC: "faulty" } });
  });

  it("sends the three verbs with the server's field names", async () => {
    const calls: Recorded[] = [];
    const client = new DiagidClient("http://h", fakeFetch(200, REC, calls));
    await client.observe("s1", "W", "dry", "t1");
    await client.feedback("s1", "P", "yes", "t2");
    await client.act("s1", "REPLACE-DC", "t1");
    expect(calls.map((c) => c.url)).toEqual([
      "http://h/sessions/s1/observe",
      "http://h/sessions/s1/feedback",
      "http://h/sessions/s1/act",
    ]);
    expect(calls[0]!.body).toEqual({ var: "W", state: "dry", time: "t1" });
    expect(calls[1]!.body).toEqual({ var: "P", state: "yes", time: "t2" });
    expect(calls[2]!.body).toEqual({ treatment: "REPLACE-DC", time: "t1" });
  });

  it("reads the wrapper keys of kb and session listings", async () => {
    const calls: Recorded[] = [];
    const client = new DiagidClient(
      "http://h",
      fakeFetch(200, { sessions: ["s1", "s2"] }, calls),
    );
    expect(await client.listSessions()).toEqual(["s1", "s2"]);
  });

  it("maps error bodies onto ApiError", async () => {
    const calls: Recorded[] = [];
    const client = new DiagidClient(
      "http://h",
      fakeFetch(409, { error: "time-regression", message: "too old" }, calls),
    );
    const failure = await client
      .observe("s1", "W", "dry", "t1")
      .then(() => null)
      .catch((e: unknown) => e);
    expect(failure).toBeInstanceOf(ApiError);
    const err = failure as ApiError;
    expect(err.status).toBe(409);
    expect(err.tag).toBe("time-regression");
    expect(err.message).toBe("too old");
  });

  it("survives an empty error body", async () => {
    const client = new DiagidClient("http://h", async () => {
      return new Response("", { status: 500 });
    });
    const failure = await client.kbText().catch((e: unknown) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).tag).toBe("unknown");
  });

  it("fetches the read-only views by path", async () => {
    const calls: Recorded[] = [];
    const client = new DiagidClient("http://h", fakeFetch(200, REC, calls));
    await client.recommendation("s9");
    await client.diagram("s9").catch(() => null);
    await client.log("s9").catch(() => null);
    await client.snapshot("s9").catch(() => null);
    expect(calls.map((c) => c.url)).toEqual([
      "http://h/sessions/s9/recommendation",
      "http://h/sessions/s9/diagram",
      "http://h/sessions/s9/log",
      "http://h/sessions/s9/snapshot",
    ]);
    expect(calls.every((c) => c.method === "GET")).toBe(true);
  });
});
