/** Typed client for the /v1 session API; no simulation logic lives here. */

import type {
  CommandLog,
  DetectionResult,
  FloorplanGeometry,
  JobState,
  LaserState,
  MapMeta,
  ReadingRow,
  TraceMeta,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function expectOk(resp: Response): Promise<Response> {
  if (!resp.ok) {
    throw new ApiError(resp.status, await resp.text());
  }
  return resp;
}

export class LabClient {
  constructor(
    public baseUrl: string,
    public sessionId: string | null = null,
    private fetchFn: typeof fetch = fetch,
  ) {}

  url(path: string): string {
    return `${this.baseUrl}/v1${path}`;
  }

  sessionUrl(path = ""): string {
    if (!this.sessionId) {
      throw new Error("no active session");
    }
    return this.url(`/sessions/${this.sessionId}${path}`);
  }

  private async getJson<T>(url: string): Promise<T> {
    const resp = await expectOk(await this.fetchFn(url));
    return (await resp.json()) as T;
  }

  private async postJson<T>(url: string, body: unknown): Promise<T> {
    const resp = await expectOk(
      await this.fetchFn(url, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
    return (await resp.json()) as T;
  }

  async createSession(scenario: Record<string, unknown> | null, clock: "realtime" | "manual" = "realtime", speed = 1.0): Promise<string> {
    const out = await this.postJson<{ session_id: string }>(this.url("/sessions"), {
      scenario,
      clock,
      speed,
    });
    this.sessionId = out.session_id;
    return out.session_id;
  }

  async sessionInfo(): Promise<Record<string, unknown>> {
    return this.getJson(this.sessionUrl());
  }

  async deleteSession(): Promise<void> {
    await expectOk(await this.fetchFn(this.sessionUrl(), { method: "DELETE" }));
    this.sessionId = null;
  }

  async floorplan(): Promise<FloorplanGeometry> {
    return this.getJson(this.sessionUrl("/floorplan"));
  }

  async advance(dtS: number): Promise<number> {
    const out = await this.postJson<{ t: number }>(this.sessionUrl("/clock/advance"), { dt_s: dtS });
    return out.t;
  }

  async setBlock(blockId: string, enabled: boolean): Promise<void> {
    await this.postJson(this.sessionUrl(`/blocks/${blockId}`), { enabled });
  }

  async setLaser(cmd: {
    on: boolean;
    power_pct?: number;
    lens?: string;
    x_um?: number;
    y_um?: number;
    node?: string;
  }): Promise<LaserState> {
    return this.postJson(this.sessionUrl("/laser"), { power_pct: 100.0, lens: "71x", ...cmd });
  }

  async acquire(params: Record<string, unknown>): Promise<{ job_id: string; state: string; artifact: string | null }> {
    return this.postJson(this.sessionUrl("/acquisitions"), params);
  }

  async job(jobId: string): Promise<JobState> {
    return this.getJson(this.sessionUrl(`/jobs/${jobId}`));
  }

  async waitForJob(jobId: string, pollMs = 150, timeoutMs = 120_000): Promise<JobState> {
    const t0 = Date.now();
    for (;;) {
      const j = await this.job(jobId);
      if (j.state === "done" || j.state === "error") {
        return j;
      }
      if (Date.now() - t0 > timeoutMs) {
        throw new Error(`job ${jobId} timed out`);
      }
      await new Promise((r) => setTimeout(r, pollMs));
    }
  }

  async artifactMeta(artifactId: string): Promise<MapMeta | TraceMeta> {
    return this.getJson(this.sessionUrl(`/artifacts/${artifactId}`));
  }

  /** Binary little-endian float32 grid of a map artifact. */
  async artifactGrid(artifactId: string): Promise<Float32Array> {
    const resp = await expectOk(await this.fetchFn(this.sessionUrl(`/artifacts/${artifactId}/data`)));
    return new Float32Array(await resp.arrayBuffer());
  }

  async artifactCsv(artifactId: string): Promise<string> {
    const resp = await expectOk(await this.fetchFn(this.sessionUrl(`/artifacts/${artifactId}/csv`)));
    return resp.text();
  }

  async startSensor(params: Record<string, unknown>): Promise<string> {
    const out = await this.postJson<{ stream_id: string }>(this.sessionUrl("/sensors"), params);
    return out.stream_id;
  }

  async readings(streamId: string, start = 0): Promise<ReadingRow[]> {
    const out = await this.getJson<{ rows: ReadingRow[] }>(
      this.sessionUrl(`/sensors/${streamId}/readings?start=${start}`),
    );
    return out.rows;
  }

  async streamCsv(streamId: string): Promise<string> {
    const resp = await expectOk(await this.fetchFn(this.sessionUrl(`/sensors/${streamId}/csv`)));
    return resp.text();
  }

  eventsUrl(streamId: string, start = 0): string {
    return this.sessionUrl(`/sensors/${streamId}/events?start=${start}`);
  }

  async detect(params: Record<string, unknown>): Promise<DetectionResult> {
    return this.postJson(this.sessionUrl("/detect"), params);
  }

  async setMasking(params: Record<string, unknown>): Promise<void> {
    await this.postJson(this.sessionUrl("/masking"), params);
  }

  async commandLog(): Promise<CommandLog> {
    return this.getJson(this.sessionUrl("/log"));
  }

  async checkpoint(): Promise<Record<string, unknown>> {
    return this.getJson(this.sessionUrl("/checkpoint"));
  }
}
