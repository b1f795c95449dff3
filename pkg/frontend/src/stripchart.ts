/** Differential strip chart: raw readings, the two-second moving average,
 * laser-on shading and detector alarm markers. */

import { movingAverage, windowSamples } from "./movingavg.js";
import type { ReadingRow } from "./types.js";

export class StripChart {
  rows: ReadingRow[] = [];
  alarms: number[] = [];
  cadenceHz = 10.0;
  windowS = 2.0;
  maxPoints = 4000;

  constructor(public canvas: HTMLCanvasElement) {}

  append(rows: ReadingRow[]): void {
    this.rows.push(...rows);
    if (this.rows.length > this.maxPoints) {
      this.rows.splice(0, this.rows.length - this.maxPoints);
    }
  }

  clear(): void {
    this.rows = [];
    this.alarms = [];
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width: w, height: h } = this.canvas;
    ctx.fillStyle = "#101018";
    ctx.fillRect(0, 0, w, h);
    if (this.rows.length < 2) return;

    const t = this.rows.map((r) => r[0]);
    const v = this.rows.map((r) => r[1]);
    const t0 = t[0];
    const t1 = t[t.length - 1];
    let lo = Math.min(...v);
    let hi = Math.max(...v);
    if (hi - lo < 1e-9) {
      hi = lo + 1;
    }
    const pad = 0.1 * (hi - lo);
    lo -= pad;
    hi += pad;
    const sx = (tt: number) => ((tt - t0) / (t1 - t0)) * (w - 50) + 45;
    const sy = (vv: number) => h - 18 - ((vv - lo) / (hi - lo)) * (h - 30);

    // laser-on shading
    ctx.fillStyle = "rgba(255, 80, 80, 0.12)";
    let runStart: number | null = null;
    for (let i = 0; i < this.rows.length; i++) {
      const on = this.rows[i][2];
      if (on && runStart === null) runStart = t[i];
      if ((!on || i === this.rows.length - 1) && runStart !== null) {
        ctx.fillRect(sx(runStart), 0, sx(t[i]) - sx(runStart), h);
        runStart = null;
      }
    }

    // raw points
    ctx.fillStyle = "rgba(140, 180, 255, 0.5)";
    for (let i = 0; i < v.length; i++) {
      ctx.fillRect(sx(t[i]) - 1, sy(v[i]) - 1, 2, 2);
    }

    // moving average
    const ma = movingAverage(v, windowSamples(this.windowS, this.cadenceHz));
    ctx.strokeStyle = "#fd5";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ma.forEach((m, i) => (i === 0 ? ctx.moveTo(sx(t[i]), sy(m)) : ctx.lineTo(sx(t[i]), sy(m))));
    ctx.stroke();

    // alarms
    ctx.strokeStyle = "#f33";
    for (const ta of this.alarms) {
      if (ta >= t0 && ta <= t1) {
        ctx.beginPath();
        ctx.moveTo(sx(ta), 0);
        ctx.lineTo(sx(ta), h);
        ctx.stroke();
      }
    }

    // axes labels
    ctx.fillStyle = "#aab";
    ctx.font = "10px monospace";
    ctx.fillText(hi.toFixed(2), 4, 12);
    ctx.fillText(lo.toFixed(2), 4, h - 20);
    ctx.fillText(`${t1.toFixed(1)} s`, w - 60, h - 4);
  }
}
