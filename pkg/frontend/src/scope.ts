/** Oscilloscope view of an averaged probe trace (CSV artifact payload). */

export interface TracePoints {
  t: number[];
  v: number[];
  integrations: number;
}

export function parseTraceCsv(text: string): TracePoints {
  const t: number[] = [];
  const v: number[] = [];
  let integrations = 1;
  for (const line of text.split("\n")) {
    if (line.startsWith("#")) {
      const [key, value] = line.slice(1).trim().split("=");
      if (key === "integrations") integrations = parseInt(value, 10);
      continue;
    }
    if (!line || line.startsWith("time_s")) continue;
    const [ts, vs] = line.split(",");
    t.push(parseFloat(ts));
    v.push(parseFloat(vs));
  }
  return { t, v, integrations };
}

export class ScopeView {
  trace: TracePoints | null = null;

  constructor(public canvas: HTMLCanvasElement) {}

  show(trace: TracePoints): void {
    this.trace = trace;
    this.draw();
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width: w, height: h } = this.canvas;
    ctx.fillStyle = "#101410";
    ctx.fillRect(0, 0, w, h);
    if (!this.trace || this.trace.t.length < 2) return;
    const { t, v, integrations } = this.trace;
    let lo = Math.min(...v);
    let hi = Math.max(...v);
    if (hi - lo < 1e-12) hi = lo + 1;
    const sx = (i: number) => (i / (t.length - 1)) * (w - 20) + 10;
    const sy = (vv: number) => h - 16 - ((vv - lo) / (hi - lo)) * (h - 26);
    ctx.strokeStyle = "#4f6";
    ctx.lineWidth = 1;
    ctx.beginPath();
    v.forEach((vv, i) => (i === 0 ? ctx.moveTo(sx(i), sy(vv)) : ctx.lineTo(sx(i), sy(vv))));
    ctx.stroke();
    ctx.fillStyle = "#8b8";
    ctx.font = "10px monospace";
    ctx.fillText(`N=${integrations}  ${(t[t.length - 1] * 1e9).toFixed(0)} ns span`, 10, 12);
  }
}
