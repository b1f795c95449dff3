/** Heatmap layer: binary grid payload -> normalised RGBA, value probing.
 *
 * Scaling mimics microscope auto-contrast: the display range is the 1st-99th
 * percentile of the map. Raw values stay available for the hover probe.
 * Grid row 0 is the bottom of the region (world convention); RGBA row 0 is
 * the top (image convention), so rows flip here, once.
 */

import { heatLut } from "./colormap.js";
import type { MapMeta } from "./types.js";
import type { Rect } from "./viewport.js";

export interface HeatmapLayer {
  meta: MapMeta;
  values: Float32Array; // row-major, row 0 at the bottom
  lo: number;
  hi: number;
  rgba: Uint8ClampedArray; // nx * ny * 4, row 0 at the top
}

export function percentileRange(values: ArrayLike<number>, loQ = 0.01, hiQ = 0.99): [number, number] {
  const sorted = Array.from(values).sort((a, b) => a - b);
  const pick = (q: number) => sorted[Math.min(sorted.length - 1, Math.max(0, Math.round(q * (sorted.length - 1))))];
  const lo = pick(loQ);
  const hi = pick(hiQ);
  return hi > lo ? [lo, hi] : [lo, lo + 1];
}

export function buildLayer(meta: MapMeta, values: Float32Array): HeatmapLayer {
  const [lo, hi] = percentileRange(values);
  const lut = heatLut();
  const { nx, ny } = meta;
  const rgba = new Uint8ClampedArray(nx * ny * 4);
  for (let row = 0; row < ny; row++) {
    const srcRow = ny - 1 - row; // flip: world bottom row -> image last row
    for (let col = 0; col < nx; col++) {
      const v = values[srcRow * nx + col];
      const q = Math.min(255, Math.max(0, Math.round(((v - lo) / (hi - lo)) * 255)));
      const dst = (row * nx + col) * 4;
      rgba[dst] = lut[q * 4];
      rgba[dst + 1] = lut[q * 4 + 1];
      rgba[dst + 2] = lut[q * 4 + 2];
      rgba[dst + 3] = 235;
    }
  }
  return { meta, values, lo, hi, rgba };
}

export function layerRect(layer: HeatmapLayer): Rect {
  const [x0, y0, x1, y1] = layer.meta.region_um;
  return { x0, y0, x1, y1 };
}

/** Raw value under a world position, or null outside the region. */
export function probeValue(layer: HeatmapLayer, xUm: number, yUm: number): number | null {
  const [x0, y0, x1, y1] = layer.meta.region_um;
  if (xUm < x0 || xUm >= x1 || yUm < y0 || yUm >= y1) {
    return null;
  }
  const col = Math.min(layer.meta.nx - 1, Math.floor((xUm - x0) / layer.meta.pitch_um));
  const row = Math.min(layer.meta.ny - 1, Math.floor((yUm - y0) / layer.meta.pitch_um));
  return layer.values[row * layer.meta.nx + col];
}

/** World-space centre of a grid pixel; the alignment contract is that this
 * point, pushed through the shared viewport transform, lands exactly where
 * the drawn image places the pixel. */
export function pixelCenter(meta: MapMeta, col: number, row: number): [number, number] {
  const [x0, y0] = meta.region_um;
  return [x0 + (col + 0.5) * meta.pitch_um, y0 + (row + 0.5) * meta.pitch_um];
}
