/** Trailing moving average used by the strip chart (the two-second view). */

export function movingAverage(values: number[], windowSamples: number): number[] {
  const w = Math.max(1, Math.round(windowSamples));
  const out = new Array<number>(values.length);
  let sum = 0;
  const buf: number[] = [];
  for (let i = 0; i < values.length; i++) {
    // pad with the first value so early samples stay on scale
    while (buf.length < w - 1 && i === 0) {
      buf.push(values[0]);
      sum += values[0];
    }
    buf.push(values[i]);
    sum += values[i];
    if (buf.length > w) {
      sum -= buf.shift() as number;
    }
    out[i] = sum / buf.length;
  }
  return out;
}

export function windowSamples(windowS: number, cadenceHz: number): number {
  return Math.max(1, Math.round(windowS * cadenceHz));
}
