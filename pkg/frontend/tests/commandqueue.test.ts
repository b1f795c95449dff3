import { describe, expect, it } from "vitest";

import { CommandQueue } from "../src/commandqueue.js";
import { movingAverage, windowSamples } from "../src/movingavg.js";

describe("command queue", () => {
  it("never overlaps mutating commands", async () => {
    const queue = new CommandQueue();
    let inFlight = 0;
    let maxInFlight = 0;
    const order: number[] = [];

    const task = (id: number, delayMs: number) => () =>
      new Promise<number>((resolve) => {
        inFlight += 1;
        maxInFlight = Math.max(maxInFlight, inFlight);
        setTimeout(() => {
          order.push(id);
          inFlight -= 1;
          resolve(id);
        }, delayMs);
      });

    const results = await Promise.all([
      queue.enqueue(task(1, 30)),
      queue.enqueue(task(2, 1)),
      queue.enqueue(task(3, 10)),
    ]);
    expect(results).toEqual([1, 2, 3]);
    expect(order).toEqual([1, 2, 3]); // strictly serialized, FIFO
    expect(maxInFlight).toBe(1);
  });

  it("keeps running after a failed command", async () => {
    const queue = new CommandQueue();
    await expect(queue.enqueue(() => Promise.reject(new Error("boom")))).rejects.toThrow("boom");
    await expect(queue.enqueue(() => Promise.resolve(42))).resolves.toBe(42);
    expect(queue.pending).toBe(0);
  });
});

describe("moving average", () => {
  it("matches the trailing-window definition with front padding", () => {
    const values = [0, 0, 0, 10, 10, 10];
    const out = movingAverage(values, 2);
    expect(out).toEqual([0, 0, 0, 5, 10, 10]);
  });

  it("window of one is the identity", () => {
    const values = [3, 1, 4, 1, 5];
    expect(movingAverage(values, 1)).toEqual(values);
  });

  it("two-second window at 10 Hz is 20 samples", () => {
    expect(windowSamples(2.0, 10.0)).toBe(20);
  });
});
