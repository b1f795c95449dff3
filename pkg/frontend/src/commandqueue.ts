/** Strictly serialized mutation queue.
 *
 * The service applies commands in receipt order per session; the client
 * must therefore never have two mutating requests in flight. Every UI
 * control funnels its command through this queue.
 */

export class CommandQueue {
  private tail: Promise<unknown> = Promise.resolve();
  private depth = 0;

  get pending(): number {
    return this.depth;
  }

  enqueue<T>(task: () => Promise<T>): Promise<T> {
    this.depth += 1;
    const run = this.tail.then(task);
    this.tail = run.catch(() => undefined).then(() => {
      this.depth -= 1;
    });
    return run;
  }
}
