/** Pan/zoom viewport over package micrometre space.
 *
 * One affine transform is shared by every layer (wireframe, heatmaps, probe
 * marker), so overlays align by construction: worldToScreen is the single
 * source of truth and drawing code derives its placement rectangles from it.
 * World y grows upward, screen y grows downward.
 */

export interface Rect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function rectFromArray(a: [number, number, number, number]): Rect {
  return { x0: a[0], y0: a[1], x1: a[2], y1: a[3] };
}

export class Viewport {
  centerX: number;
  centerY: number;
  /** screen pixels per micrometre */
  scale: number;

  constructor(
    public bounds: Rect,
    public widthPx: number,
    public heightPx: number,
  ) {
    this.centerX = (bounds.x0 + bounds.x1) / 2;
    this.centerY = (bounds.y0 + bounds.y1) / 2;
    this.scale = this.fitScale();
    this.clamp();
  }

  fitScale(): number {
    return Math.min(
      this.widthPx / (this.bounds.x1 - this.bounds.x0),
      this.heightPx / (this.bounds.y1 - this.bounds.y0),
    );
  }

  resize(widthPx: number, heightPx: number): void {
    this.widthPx = widthPx;
    this.heightPx = heightPx;
    this.clamp();
  }

  worldToScreen(x: number, y: number): [number, number] {
    return [
      (x - this.centerX) * this.scale + this.widthPx / 2,
      this.heightPx / 2 - (y - this.centerY) * this.scale,
    ];
  }

  screenToWorld(px: number, py: number): [number, number] {
    return [
      (px - this.widthPx / 2) / this.scale + this.centerX,
      (this.heightPx / 2 - py) / this.scale + this.centerY,
    ];
  }

  /** Screen-space rectangle of a world rect (x, y, w, h for drawImage). */
  screenRect(r: Rect): { x: number; y: number; w: number; h: number } {
    const [sx0, sy1] = this.worldToScreen(r.x0, r.y0);
    const [sx1, sy0] = this.worldToScreen(r.x1, r.y1);
    return { x: sx0, y: sy0, w: sx1 - sx0, h: sy1 - sy0 };
  }

  /** Keep the view inside the package; when zoomed out past the package,
   * lock the relevant axis to the package centre. */
  clamp(): void {
    const halfW = this.widthPx / 2 / this.scale;
    const halfH = this.heightPx / 2 / this.scale;
    this.centerX = clampAxis(this.centerX, this.bounds.x0, this.bounds.x1, halfW);
    this.centerY = clampAxis(this.centerY, this.bounds.y0, this.bounds.y1, halfH);
  }

  panByPixels(dxPx: number, dyPx: number): void {
    this.centerX -= dxPx / this.scale;
    this.centerY += dyPx / this.scale;
    this.clamp();
  }

  /** Zoom by `factor`, keeping the world point under the cursor fixed. */
  zoomAt(px: number, py: number, factor: number): void {
    const [wx, wy] = this.screenToWorld(px, py);
    const minScale = this.fitScale() / 4;
    const maxScale = 200.0; // ~5 nm/px, far below any feature size
    this.scale = Math.min(maxScale, Math.max(minScale, this.scale * factor));
    // re-anchor so (wx, wy) stays under (px, py), then clamp
    this.centerX = wx - (px - this.widthPx / 2) / this.scale;
    this.centerY = wy + (py - this.heightPx / 2) / this.scale;
    this.clamp();
  }
}

function clampAxis(c: number, lo: number, hi: number, half: number): number {
  if (2 * half >= hi - lo) {
    return (lo + hi) / 2;
  }
  return Math.min(hi - half, Math.max(lo + half, c));
}
