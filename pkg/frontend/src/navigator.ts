/** Die navigator canvas: wireframe, heatmap overlays, probe marker.
 *
 * Every layer is placed through the shared viewport transform; the heatmap
 * image is drawn into the screen rectangle of its world region, so overlay
 * alignment is exact at any zoom.
 */

import type { HeatmapLayer } from "./heatmap.js";
import { layerRect } from "./heatmap.js";
import type { FloorplanGeometry, LaserState } from "./types.js";
import { Viewport, rectFromArray } from "./viewport.js";

export interface OverlayFlags {
  wireframe: boolean;
  emission: boolean;
  eofm: boolean;
  probe: boolean;
}

export class NavigatorView {
  layers: HeatmapLayer[] = [];
  laser: LaserState | null = null;
  selection: { x0: number; y0: number; x1: number; y1: number } | null = null;
  flags: OverlayFlags = { wireframe: true, emission: true, eofm: true, probe: true };
  private imageCache = new Map<HeatmapLayer, ImageBitmap | HTMLCanvasElement>();

  constructor(
    public canvas: HTMLCanvasElement,
    public geometry: FloorplanGeometry,
    public viewport: Viewport,
  ) {}

  addLayer(layer: HeatmapLayer): void {
    this.layers = this.layers.filter((l) => l.meta.kind !== layer.meta.kind);
    this.layers.push(layer);
  }

  private layerImage(layer: HeatmapLayer): HTMLCanvasElement {
    let img = this.imageCache.get(layer) as HTMLCanvasElement | undefined;
    if (!img) {
      img = document.createElement("canvas");
      img.width = layer.meta.nx;
      img.height = layer.meta.ny;
      const ctx = img.getContext("2d") as CanvasRenderingContext2D;
      const rgba = new Uint8ClampedArray(layer.rgba); // fresh ArrayBuffer backing
      ctx.putImageData(new ImageData(rgba, layer.meta.nx, layer.meta.ny), 0, 0);
      this.imageCache.set(layer, img);
    }
    return img;
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const vp = this.viewport;
    ctx.fillStyle = "#0b0b10";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);

    if (this.flags.wireframe) {
      this.drawWireframe(ctx);
    }
    for (const layer of this.layers) {
      if ((layer.meta.kind === "emission" && !this.flags.emission)
        || (layer.meta.kind === "eofm" && !this.flags.eofm)) {
        continue;
      }
      const r = vp.screenRect(layerRect(layer));
      ctx.imageSmoothingEnabled = false;
      ctx.globalAlpha = 0.9;
      ctx.drawImage(this.layerImage(layer), r.x, r.y, r.w, r.h);
      ctx.globalAlpha = 1.0;
    }
    if (this.flags.probe && this.laser) {
      this.drawProbe(ctx, this.laser);
    }
    if (this.selection) {
      const r = vp.screenRect({
        x0: Math.min(this.selection.x0, this.selection.x1),
        y0: Math.min(this.selection.y0, this.selection.y1),
        x1: Math.max(this.selection.x0, this.selection.x1),
        y1: Math.max(this.selection.y0, this.selection.y1),
      });
      ctx.strokeStyle = "#6cf";
      ctx.setLineDash([6, 4]);
      ctx.strokeRect(r.x, r.y, r.w, r.h);
      ctx.setLineDash([]);
    }
  }

  private drawWireframe(ctx: CanvasRenderingContext2D): void {
    const vp = this.viewport;
    ctx.lineWidth = 1;
    for (const chip of this.geometry.chiplets) {
      const r = vp.screenRect(rectFromArray(chip));
      ctx.strokeStyle = "#3a3f55";
      ctx.strokeRect(r.x, r.y, r.w, r.h);
    }
    for (const col of this.geometry.laguna_columns) {
      const r = vp.screenRect(rectFromArray(col.rect_um));
      ctx.fillStyle = "rgba(120, 170, 255, 0.18)";
      ctx.fillRect(r.x, r.y, r.w, r.h);
    }
    for (const block of this.geometry.ro_blocks) {
      const r = vp.screenRect(rectFromArray(block.rect_um));
      ctx.strokeStyle = "#7a5";
      ctx.strokeRect(r.x, r.y, r.w, r.h);
      if (r.w > 30) {
        ctx.fillStyle = "#7a5";
        ctx.font = "10px sans-serif";
        ctx.fillText(block.id, r.x + 2, r.y + 12);
      }
    }
  }

  private drawProbe(ctx: CanvasRenderingContext2D, laser: LaserState): void {
    const [px, py] = this.viewport.worldToScreen(laser.x_um, laser.y_um);
    const r = Math.max(3, laser.spot_radius_um * this.viewport.scale);
    ctx.strokeStyle = laser.on ? "#f55" : "#777";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(px, py, r, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(px - r - 4, py);
    ctx.lineTo(px + r + 4, py);
    ctx.moveTo(px, py - r - 4);
    ctx.lineTo(px, py + r + 4);
    ctx.stroke();
  }
}
