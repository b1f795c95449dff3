/** Payload shapes of the /v1 session API. */

export interface LagunaColumn {
  boundary: number;
  rect_um: [number, number, number, number];
  tiles: number;
  tile_pitch_um: number;
}

export interface RoBlockGeom {
  id: string;
  rect_um: [number, number, number, number];
  oscillators: number;
}

export interface FloorplanGeometry {
  package_um: [number, number, number, number];
  chiplets: [number, number, number, number][];
  boundaries_x_um: number[];
  laguna_columns: LagunaColumn[];
  ro_blocks: RoBlockGeom[];
  fabric: {
    slice_pitch_um: number;
    cols_per_chiplet: number;
    rows: number;
    registers_per_spot: number;
  };
  counts: Record<string, number>;
}

export interface LaserState {
  x_um: number;
  y_um: number;
  power_pct: number;
  lens: string;
  on: boolean;
  spot_radius_um: number;
  t: number;
}

export interface JobState {
  job_id: string;
  kind: string;
  state: "queued" | "running" | "done" | "error";
  progress: number;
  artifact: string | null;
  error: string | null;
}

export interface MapMeta {
  kind: string;
  region_um: [number, number, number, number];
  pitch_um: number;
  nx: number;
  ny: number;
  meta: Record<string, unknown>;
}

export interface TraceMeta {
  kind: "trace";
  integrations: number;
  rate_hz: number;
  trigger_period_s: number;
  position_um: [number, number];
  meta: Record<string, unknown>;
}

/** One sensor reading row: [t_s, differential, laser_on, power_pct]. */
export type ReadingRow = [number, number, boolean, number];

export interface DetectionResult {
  alarms: { t_s: number; statistic: number }[];
  latencies_s: number[];
  missed_steps: number;
  false_alarm_rate_per_hour: number;
  summary: string;
}

export interface CommandLog {
  doc: Record<string, unknown>;
  seed: number;
  t: number;
  log: { t: number; cmd: string; params: Record<string, unknown> }[];
}

export const LENSES = ["5x", "20x", "50x", "71x"] as const;
export type Lens = (typeof LENSES)[number];
