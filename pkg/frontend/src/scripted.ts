/** Headless scripted session: the canonical UI walk-through.
 *
 * Runs the full workflow (toggle a guidepost block, emission capture,
 * frequency scan, park the probe and acquire, flip masking and re-acquire)
 * through the same client and command queue the interactive panels use,
 * then exports the command log and every artifact's CSV. The log replays
 * byte-identically through the batch CLI, which is the parity contract.
 */

import { CommandQueue } from "./commandqueue.js";
import { LabClient } from "./api.js";

export interface ScriptedResult {
  sessionId: string;
  log: Record<string, unknown>;
  artifactCsvs: Record<string, string>;
  streamCsvs: Record<string, string>;
}

export async function runScriptedSession(client: LabClient): Promise<ScriptedResult> {
  const queue = new CommandQueue();
  const scenario = {
    name: "scripted-ui-session",
    seed: 70707,
    floorplan: {
      ro_blocks: [{ id: "guide0", chiplet: 0, x_um: 2000.0, y_um: 3000.0 }],
    },
    stimulus: {
      assignments: [
        { node: "sll:0:400:0:0", activity: { kind: "toggle", frequency_hz: 100e6 } },
      ],
    },
  };
  await queue.enqueue(() => client.createSession(scenario, "manual"));
  const artifacts: string[] = [];

  // guidepost on, emission overview of its neighbourhood
  await queue.enqueue(() => client.setBlock("guide0", true));
  const emission = await queue.enqueue(() =>
    client.acquire({
      kind: "emission",
      region_um: [1500, 2500, 2500, 3500],
      exposure_s: 2.0,
      lens: "5x",
      pitch_um: 20.0,
    }),
  );
  const emissionJob = await client.waitForJob(emission.job_id);
  if (emissionJob.artifact) artifacts.push(emissionJob.artifact);

  // frequency-selective scan around the driver tile
  const scan = await queue.enqueue(() =>
    client.acquire({
      kind: "eofm",
      region_um: [11595, 14430, 11650, 14485],
      f_target_hz: 100e6,
      dwell_s: 1e-5,
      pitch_um: 1.0,
      lens: "20x",
    }),
  );
  const scanJob = await client.waitForJob(scan.job_id);
  if (scanJob.artifact) artifacts.push(scanJob.artifact);

  // watch the differential sensor while the laser parks on the driver
  const stream = await queue.enqueue(() =>
    client.startSensor({
      sensor: "phase",
      cadence_hz: 10.0,
      probe_node: "sll:0:400:0:0",
      control_node: "sll:0:600:0:0",
    }),
  );
  await queue.enqueue(() => client.advance(2.0));
  await queue.enqueue(() =>
    client.setLaser({ on: true, power_pct: 100.0, lens: "71x", node: "sll:0:400:0:0" }),
  );
  await queue.enqueue(() => client.advance(6.0));

  // probe the plain toggling driver
  const probePlain = await queue.enqueue(() =>
    client.acquire({
      kind: "eop",
      node: "sll:0:400:0:0",
      integrations: 100,
      trigger_period_s: 1e-6,
      rate_hz: 1e9,
    }),
  );
  if (probePlain.artifact) artifacts.push(probePlain.artifact);

  // flip the masking countermeasure on a link and watch the attack fail
  const link = { data_lanes: ["sll:0:10:0:0"], pad_lane: "sll:0:10:3:5" };
  await queue.enqueue(() => client.setMasking({ enabled: true, ...link }));
  await queue.enqueue(() =>
    client.setLaser({ on: true, power_pct: 100.0, lens: "71x", node: "sll:0:10:0:0" }),
  );
  const probeMasked = await queue.enqueue(() =>
    client.acquire({
      kind: "eop",
      node: "sll:0:10:0:0",
      integrations: 400,
      trigger_period_s: 64e-8,
      rate_hz: 4e8,
    }),
  );
  if (probeMasked.artifact) artifacts.push(probeMasked.artifact);
  await queue.enqueue(() => client.advance(2.0));

  const log = (await client.commandLog()) as unknown as Record<string, unknown>;
  const artifactCsvs: Record<string, string> = {};
  for (const id of artifacts) {
    artifactCsvs[id] = await client.artifactCsv(id);
  }
  const streamCsvs: Record<string, string> = {
    [stream]: await client.streamCsv(stream),
  };
  return { sessionId: client.sessionId as string, log, artifactCsvs, streamCsvs };
}
