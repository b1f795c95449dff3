/** Virtual microscope single-page app.
 *
 * All state that matters lives on the server: the page holds a session id,
 * a viewport and fetched artifacts. Every control maps to exactly one
 * session command, funnelled through the command queue so mutations never
 * overlap. Reloading and rebinding to the same session reproduces the view
 * from server state alone.
 */

import { LabClient } from "./api.js";
import { CommandQueue } from "./commandqueue.js";
import { buildLayer, probeValue } from "./heatmap.js";
import { NavigatorView } from "./navigator.js";
import { parseTraceCsv, ScopeView } from "./scope.js";
import { StripChart } from "./stripchart.js";
import type { FloorplanGeometry, MapMeta, ReadingRow } from "./types.js";
import { LENSES } from "./types.js";
import { rectFromArray, Viewport } from "./viewport.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

type Mode = "pan" | "select" | "probe";

class App {
  client: LabClient;
  queue = new CommandQueue();
  geometry: FloorplanGeometry | null = null;
  nav: NavigatorView | null = null;
  scope: ScopeView;
  chart: StripChart;
  mode: Mode = "pan";
  streamId: string | null = null;
  streamCursor = 0;
  events: EventSource | null = null;
  maskingOn = false;

  constructor() {
    const base = (el<HTMLInputElement>("service-url").value || "").replace(/\/$/, "");
    this.client = new LabClient(base);
    this.scope = new ScopeView(el<HTMLCanvasElement>("scope"));
    this.chart = new StripChart(el<HTMLCanvasElement>("chart"));
  }

  status(text: string, isError = false): void {
    const bar = el<HTMLDivElement>("status");
    bar.textContent = text;
    bar.className = isError ? "status error" : "status";
  }

  async connect(): Promise<void> {
    const base = el<HTMLInputElement>("service-url").value.replace(/\/$/, "");
    this.client.baseUrl = base;
    const existing = el<HTMLInputElement>("session-id").value.trim();
    try {
      if (existing) {
        this.client.sessionId = existing;
        await this.client.sessionInfo(); // validate binding
      } else {
        await this.queue.enqueue(() => this.client.createSession(null, "realtime"));
        el<HTMLInputElement>("session-id").value = this.client.sessionId ?? "";
      }
      await this.bind();
      this.status(`session ${this.client.sessionId}`);
    } catch (err) {
      this.status(`service unreachable: ${String(err)}`, true);
    }
  }

  async bind(): Promise<void> {
    this.geometry = await this.client.floorplan();
    const canvas = el<HTMLCanvasElement>("die");
    const viewport = new Viewport(
      rectFromArray(this.geometry.package_um), canvas.width, canvas.height);
    this.nav = new NavigatorView(canvas, this.geometry, viewport);
    this.buildBlockPanel();
    await this.refreshLaser();
    this.installCanvasHandlers(canvas);
    this.nav.draw();
  }

  buildBlockPanel(): void {
    const panel = el<HTMLDivElement>("blocks");
    panel.innerHTML = "";
    for (const block of this.geometry?.ro_blocks ?? []) {
      const btn = document.createElement("button");
      btn.textContent = block.id;
      btn.onclick = () =>
        this.queue
          .enqueue(() => this.client.setBlock(block.id, !btn.classList.contains("on")))
          .then(() => btn.classList.toggle("on"))
          .catch((e) => this.status(String(e), true));
      panel.appendChild(btn);
    }
    if (!panel.children.length) {
      panel.textContent = "no guidepost blocks in this floorplan";
    }
  }

  installCanvasHandlers(canvas: HTMLCanvasElement): void {
    let dragging = false;
    let last: [number, number] = [0, 0];
    let selStart: [number, number] | null = null;

    canvas.onmousedown = (ev) => {
      const [mx, my] = [ev.offsetX, ev.offsetY];
      if (this.mode === "pan") {
        dragging = true;
        last = [mx, my];
      } else if (this.mode === "select" && this.nav) {
        selStart = this.nav.viewport.screenToWorld(mx, my);
      } else if (this.mode === "probe" && this.nav) {
        const [wx, wy] = this.nav.viewport.screenToWorld(mx, my);
        this.placeProbe(wx, wy);
      }
    };
    canvas.onmousemove = (ev) => {
      if (!this.nav) return;
      const [mx, my] = [ev.offsetX, ev.offsetY];
      if (dragging) {
        this.nav.viewport.panByPixels(mx - last[0], my - last[1]);
        last = [mx, my];
        this.nav.draw();
      } else if (selStart && this.mode === "select") {
        const [wx, wy] = this.nav.viewport.screenToWorld(mx, my);
        this.nav.selection = { x0: selStart[0], y0: selStart[1], x1: wx, y1: wy };
        this.nav.draw();
      }
      this.updateHover(mx, my);
    };
    canvas.onmouseup = () => {
      dragging = false;
      selStart = null;
    };
    canvas.onwheel = (ev) => {
      ev.preventDefault();
      if (!this.nav) return;
      this.nav.viewport.zoomAt(ev.offsetX, ev.offsetY, ev.deltaY < 0 ? 1.25 : 0.8);
      this.nav.draw();
    };
  }

  updateHover(mx: number, my: number): void {
    if (!this.nav) return;
    const [wx, wy] = this.nav.viewport.screenToWorld(mx, my);
    let text = `${wx.toFixed(1)}, ${wy.toFixed(1)} um`;
    for (const layer of this.nav.layers) {
      const v = probeValue(layer, wx, wy);
      if (v !== null) {
        text += `  |  ${layer.meta.kind}: ${v.toPrecision(4)}`;
      }
    }
    el<HTMLDivElement>("hover").textContent = text;
  }

  currentLens(): string {
    return el<HTMLSelectElement>("lens").value;
  }

  async refreshLaser(): Promise<void> {
    const info = (await this.client.sessionInfo()) as { laser: never };
    if (this.nav) {
      this.nav.laser = info.laser;
      this.nav.draw();
    }
  }

  async runEmission(): Promise<void> {
    if (!this.nav) return;
    const region = this.selectedRegion() ?? this.geometry?.package_um;
    const job = await this.queue.enqueue(() =>
      this.client.acquire({
        kind: "emission",
        region_um: region,
        exposure_s: parseFloat(el<HTMLInputElement>("exposure").value),
        lens: "5x",
        pitch_um: 20.0,
      }),
    );
    await this.showMapWhenDone(job.job_id);
  }

  async runScan(preview: boolean): Promise<void> {
    const region = this.selectedRegion();
    if (!region) {
      this.status("drag a region first (select mode)", true);
      return;
    }
    const job = await this.queue.enqueue(() =>
      this.client.acquire({
        kind: preview ? "eofm_preview" : "eofm",
        region_um: region,
        f_target_hz: parseFloat(el<HTMLInputElement>("f-target").value),
        dwell_s: parseFloat(el<HTMLInputElement>("dwell").value),
        pitch_um: preview ? 4.0 : parseFloat(el<HTMLInputElement>("scan-pitch").value),
        lens: this.currentLens(),
        power_pct: parseFloat(el<HTMLInputElement>("power").value),
      }),
    );
    await this.showMapWhenDone(job.job_id);
  }

  selectedRegion(): [number, number, number, number] | null {
    const s = this.nav?.selection;
    if (!s) return null;
    return [Math.min(s.x0, s.x1), Math.min(s.y0, s.y1), Math.max(s.x0, s.x1), Math.max(s.y0, s.y1)];
  }

  async showMapWhenDone(jobId: string): Promise<void> {
    const bar = el<HTMLProgressElement>("job-progress");
    bar.hidden = false;
    const poll = setInterval(async () => {
      try {
        const j = await this.client.job(jobId);
        bar.value = j.progress;
      } catch {
        /* transient poll failures are fine */
      }
    }, 250);
    try {
      const job = await this.client.waitForJob(jobId);
      if (job.state === "error" || !job.artifact) {
        this.status(`capture failed: ${job.error}`, true);
        return;
      }
      const meta = (await this.client.artifactMeta(job.artifact)) as MapMeta;
      const grid = await this.client.artifactGrid(job.artifact);
      if (this.nav) {
        this.nav.addLayer(buildLayer(meta, grid));
        this.nav.draw();
      }
      this.status(`${meta.kind} map ${meta.nx}x${meta.ny} ready`);
    } finally {
      clearInterval(poll);
      bar.hidden = true;
    }
  }

  async placeProbe(xUm: number, yUm: number): Promise<void> {
    await this.queue.enqueue(() =>
      this.client.setLaser({
        on: true,
        power_pct: parseFloat(el<HTMLInputElement>("power").value),
        lens: this.currentLens(),
        x_um: xUm,
        y_um: yUm,
      }),
    );
    await this.refreshLaser();
    this.status(`probe parked at ${xUm.toFixed(1)}, ${yUm.toFixed(1)} um`);
  }

  async acquireTrace(): Promise<void> {
    const laser = this.nav?.laser;
    if (!laser || !laser.on) {
      this.status("park the probe first (probe mode, click a node)", true);
      return;
    }
    const n = parseInt(el<HTMLSelectElement>("integrations").value, 10);
    const job = await this.queue.enqueue(() =>
      this.client.acquire({
        kind: "eop",
        x_um: laser.x_um,
        y_um: laser.y_um,
        integrations: n,
        trigger_period_s: 64e-8,
        rate_hz: 4e8,
      }),
    );
    if (job.artifact) {
      this.scope.show(parseTraceCsv(await this.client.artifactCsv(job.artifact)));
    }
  }

  async toggleMasking(): Promise<void> {
    this.maskingOn = !this.maskingOn;
    const link = { data_lanes: ["sll:0:10:0:0"], pad_lane: "sll:0:10:3:5" };
    await this.queue.enqueue(() => this.client.setMasking({ enabled: this.maskingOn, ...link }));
    el<HTMLButtonElement>("masking").textContent = this.maskingOn ? "masking: ON" : "masking: OFF";
    this.status(this.maskingOn ? "link masked: averaging now flattens" : "link plain");
  }

  async startStream(): Promise<void> {
    this.streamId = await this.queue.enqueue(() =>
      this.client.startSensor({
        sensor: "phase",
        cadence_hz: 10.0,
        probe_node: "sll:0:400:0:0",
        control_node: "sll:0:600:0:0",
      }),
    );
    this.streamCursor = 0;
    this.chart.clear();
    this.chart.cadenceHz = 10.0;
    this.events = new EventSource(this.client.eventsUrl(this.streamId));
    this.events.onmessage = (ev) => {
      const payload = JSON.parse(ev.data) as { rows: ReadingRow[]; next: number };
      this.chart.append(payload.rows);
      this.streamCursor = payload.next;
      this.chart.draw();
    };
    this.status(`sensor stream ${this.streamId} live`);
  }

  async runDetector(): Promise<void> {
    if (!this.streamId) {
      this.status("start the sensor stream first", true);
      return;
    }
    const result = await this.queue.enqueue(() =>
      this.client.detect({ stream: this.streamId as string, k_ps: 0.2, h_ps: 2.0, window: 100 }),
    );
    this.chart.alarms = result.alarms.map((a) => a.t_s);
    this.chart.draw();
    el<HTMLPreElement>("detector-out").textContent = result.summary;
  }
}

function wire(): void {
  const app = new App();
  el<HTMLButtonElement>("connect").onclick = () => void app.connect();
  for (const mode of ["pan", "select", "probe"] as const) {
    el<HTMLButtonElement>(`mode-${mode}`).onclick = () => {
      app.mode = mode;
      document.querySelectorAll(".mode").forEach((b) => b.classList.remove("on"));
      el(`mode-${mode}`).classList.add("on");
    };
  }
  const lensSel = el<HTMLSelectElement>("lens");
  for (const lens of LENSES) {
    const opt = document.createElement("option");
    opt.value = lens;
    opt.textContent = lens;
    lensSel.appendChild(opt);
  }
  lensSel.value = "20x";
  el<HTMLButtonElement>("run-emission").onclick = () => void app.runEmission();
  el<HTMLButtonElement>("run-scan").onclick = () => void app.runScan(false);
  el<HTMLButtonElement>("run-preview").onclick = () => void app.runScan(true);
  el<HTMLButtonElement>("acquire").onclick = () => void app.acquireTrace();
  el<HTMLButtonElement>("masking").onclick = () => void app.toggleMasking();
  el<HTMLButtonElement>("start-stream").onclick = () => void app.startStream();
  el<HTMLButtonElement>("detect").onclick = () => void app.runDetector();
}

if (typeof document !== "undefined" && document.getElementById("die")) {
  wire();
}
