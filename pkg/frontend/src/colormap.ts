/** Perceptually uniform heat colormap (inferno-style anchor ramp). */

const ANCHORS: [number, number, number][] = [
  [0, 0, 4], [22, 11, 57], [66, 10, 104], [106, 23, 110],
  [147, 38, 103], [186, 54, 85], [221, 81, 58], [243, 120, 25],
  [252, 165, 10], [246, 215, 70], [252, 255, 164],
];

/** value in [0,1] -> [r,g,b] */
export function heatColor(v: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, v)) * (ANCHORS.length - 1);
  const i = Math.min(ANCHORS.length - 2, Math.floor(x));
  const f = x - i;
  const a = ANCHORS[i];
  const b = ANCHORS[i + 1];
  return [
    Math.round(a[0] + (b[0] - a[0]) * f),
    Math.round(a[1] + (b[1] - a[1]) * f),
    Math.round(a[2] + (b[2] - a[2]) * f),
  ];
}

/** 256-entry RGBA lookup table. */
export function heatLut(): Uint8ClampedArray {
  const lut = new Uint8ClampedArray(256 * 4);
  for (let i = 0; i < 256; i++) {
    const [r, g, b] = heatColor(i / 255);
    lut[i * 4] = r;
    lut[i * 4 + 1] = g;
    lut[i * 4 + 2] = b;
    lut[i * 4 + 3] = 255;
  }
  return lut;
}
