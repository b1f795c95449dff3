import { describe, expect, it } from "vitest";

import { ApiError, LabClient } from "../src/api.js";
import { parseTraceCsv } from "../src/scope.js";

function mockFetch(handler: (url: string, init?: RequestInit) => { status?: number; body: unknown }) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    calls.push({ url, init });
    const out = handler(url, init);
    const status = out.status ?? 200;
    const bodyText = typeof out.body === "string" ? out.body : JSON.stringify(out.body);
    return new Response(bodyText, {
      status,
      headers: { "content-type": typeof out.body === "string" ? "text/plain" : "application/json" },
    });
  }) as typeof fetch;
  return { fn, calls };
}

describe("client url building and verbs", () => {
  it("creates a session and scopes later calls to it", async () => {
    const { fn, calls } = mockFetch((url) => {
      if (url.endsWith("/v1/sessions")) return { body: { session_id: "abc123" } };
      if (url.endsWith("/v1/sessions/abc123/floorplan")) return { body: { chiplets: [] } };
      throw new Error(`unexpected ${url}`);
    });
    const client = new LabClient("http://lab:8787", null, fn);
    await client.createSession(null, "manual");
    expect(client.sessionId).toBe("abc123");
    await client.floorplan();
    expect(calls[0].url).toBe("http://lab:8787/v1/sessions");
    expect(JSON.parse(String(calls[0].init?.body))).toMatchObject({ clock: "manual" });
    expect(calls[1].url).toBe("http://lab:8787/v1/sessions/abc123/floorplan");
  });

  it("raises ApiError with the server's message", async () => {
    const { fn } = mockFetch(() => ({ status: 422, body: "$.f_target_hz: bad" }));
    const client = new LabClient("http://lab:8787", "s1", fn);
    await expect(client.acquire({ kind: "eofm" })).rejects.toThrowError(ApiError);
    await expect(client.acquire({ kind: "eofm" })).rejects.toThrow("f_target_hz");
  });

  it("demands a session before session-scoped calls", () => {
    const client = new LabClient("http://lab:8787");
    expect(() => client.sessionUrl("/laser")).toThrow("no active session");
  });

  it("builds reading cursors and SSE urls", () => {
    const client = new LabClient("http://lab:8787", "s9");
    expect(client.eventsUrl("s1", 40)).toBe("http://lab:8787/v1/sessions/s9/sensors/s1/events?start=40");
  });
});

describe("trace csv parsing", () => {
  it("reads metadata and samples", () => {
    const text = [
      "# integrations=25",
      "# rate_hz=1e+09",
      "time_s,value",
      "0,10.5",
      "1e-09,9.5",
      "2e-09,10.1",
    ].join("\n");
    const trace = parseTraceCsv(text);
    expect(trace.integrations).toBe(25);
    expect(trace.t).toHaveLength(3);
    expect(trace.v[1]).toBeCloseTo(9.5);
  });
});
