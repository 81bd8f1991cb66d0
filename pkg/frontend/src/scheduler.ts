/**
 * Latest-wins request scheduling.
 *
 * Sliders emit far faster than the server renders, so requests funnel
 * through three gates:
 *
 *   1. a debounce window (150 ms by default) collapses a burst of moves
 *      into one committed parameter set;
 *   2. at most one request is on the wire at a time; a commit that lands
 *      mid-flight waits in a single "pending" slot, newest wins;
 *   3. every commit gets a monotonically increasing id, and a response
 *      is rendered only if its id is still the newest commit. Anything
 *      older is discarded, never displayed.
 *
 * The id check is what keeps a displayed image attributable: the result
 * callback receives the exact parameter set that produced the bytes.
 */

export interface SchedulerCallbacks<P, R> {
  /** Fresh result; `params` is the set that produced it. */
  onResult(result: R, params: P, id: number): void;
  /** Failure of the newest request; stale failures are dropped. */
  onError(error: unknown, params: P, id: number): void;
}

export const DEBOUNCE_MS = 150;

export class LatestWins<P, R> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private latest: P | null = null;
  private seq = 0;
  private inFlightId: number | null = null;
  private pending: { id: number; params: P } | null = null;

  /** Responses dropped because a newer commit superseded them. */
  discarded = 0;

  constructor(
    private send: (params: P, id: number) => Promise<R>,
    private callbacks: SchedulerCallbacks<P, R>,
    private debounceMs: number = DEBOUNCE_MS,
  ) {}

  get inFlight(): boolean {
    return this.inFlightId !== null;
  }

  get waiting(): boolean {
    return this.pending !== null;
  }

  /** Debounced entry point for slider movement. */
  request(params: P): void {
    this.latest = params;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      const p = this.latest as P;
      this.latest = null;
      this.commit(p);
    }, this.debounceMs);
  }

  /** Immediate entry point: slider release, retry, first render. */
  commitNow(params: P): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
      this.latest = null;
    }
    this.commit(params);
  }

  /** Fire the debounce timer early if one is armed. */
  flush(): void {
    if (this.timer === null) return;
    clearTimeout(this.timer);
    this.timer = null;
    const p = this.latest as P;
    this.latest = null;
    this.commit(p);
  }

  cancel(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.latest = null;
    this.pending = null;
  }

  /**
   * Mark everything queued or in flight as stale without sending a new
   * request. Used when a cached result is displayed directly: whatever
   * the wire returns afterwards must not overwrite it.
   */
  invalidate(): void {
    this.seq++;
    this.pending = null;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
      this.latest = null;
    }
  }

  private commit(params: P): void {
    const id = ++this.seq;
    if (this.inFlightId !== null) {
      // Replacing an older pending set is itself a discard: that set was
      // never sent and never will be.
      this.pending = { id, params };
      return;
    }
    this.dispatch(id, params);
  }

  private dispatch(id: number, params: P): void {
    this.inFlightId = id;
    this.send(params, id).then(
      (result) => this.settle(id, params, result, null),
      (error: unknown) => this.settle(id, params, null, error ?? new Error("request failed")),
    );
  }

  private settle(id: number, params: P, result: R | null, error: unknown): void {
    this.inFlightId = null;
    const fresh = id === this.seq;
    const next = this.pending;
    this.pending = null;
    if (next !== null) this.dispatch(next.id, next.params);

    if (!fresh) {
      this.discarded++;
      return;
    }
    if (error !== null) {
      this.callbacks.onError(error, params, id);
    } else {
      this.callbacks.onResult(result as R, params, id);
    }
  }
}
