/**
 * Single-page state machine for the studio.
 *
 * All slider input is clamped on entry, so `state.params` is valid by
 * construction and whatever the scheduler ships is in range. A displayed
 * result always carries the parameter snapshot of the request that
 * produced it, even while newer requests are in flight.
 */
import { ServiceError, StudioClient } from "./api.js";
import {
  clampParams,
  clampRank,
  clampSigma,
  clampUnit,
  cloneParams,
  defaultParams,
  paramsKey,
  StylizeParams,
} from "./params.js";
import { DEBOUNCE_MS, LatestWins } from "./scheduler.js";

export interface RenderedResult {
  blob: Blob;
  /** Snapshot of the request that produced `blob`. */
  params: StylizeParams;
  requestId: number;
}

export type StudioError =
  | { kind: "upload"; message: string }
  | { kind: "field"; field: string; message: string }
  | { kind: "network"; message: string };

export interface StudioState {
  image: { blob: Blob; name: string } | null;
  params: StylizeParams;
  result: RenderedResult | null;
  inFlight: boolean;
  error: StudioError | null;
  canRetry: boolean;
}

const CACHE_CAP = 16;

export class StudioStore {
  readonly state: StudioState;
  private scheduler: LatestWins<StylizeParams, Blob>;
  private cache = new Map<string, RenderedResult>();
  private retryParams: StylizeParams | null = null;
  private listeners = new Set<(s: StudioState) => void>();

  constructor(
    private client: StudioClient,
    readonly numLayers: number,
    debounceMs: number = DEBOUNCE_MS,
  ) {
    this.state = {
      image: null,
      params: defaultParams(numLayers),
      result: null,
      inFlight: false,
      error: null,
      canRetry: false,
    };
    this.scheduler = new LatestWins<StylizeParams, Blob>(
      (params) => {
        const img = this.state.image;
        if (img === null) return Promise.reject(new Error("no image uploaded"));
        return this.client.stylize(img.blob, params);
      },
      {
        onResult: (blob, params, id) => this.acceptResult(blob, params, id),
        onError: (error, params) => this.acceptError(error, params),
      },
      debounceMs,
    );
  }

  subscribe(fn: (s: StudioState) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private notify(): void {
    this.state.inFlight = this.scheduler.inFlight || this.scheduler.waiting;
    for (const fn of this.listeners) fn(this.state);
  }

  // ---- upload ----

  uploadImage(blob: Blob, name: string): void {
    if (blob.size === 0) {
      this.state.error = { kind: "upload", message: `${name} is empty` };
      this.notify();
      return;
    }
    this.scheduler.cancel();
    this.scheduler.invalidate();
    this.cache.clear();
    this.state.image = { blob, name };
    this.state.result = null;
    this.state.error = null;
    this.state.canRetry = false;
    this.retryParams = null;
    this.notify();
  }

  // ---- sliders ----

  setWeight(layer: number, value: number): void {
    if (layer < 0 || layer >= this.numLayers) return;
    this.state.params.weights[layer] = clampUnit(value);
    this.adjust();
  }

  setAllWeights(value: number): void {
    this.state.params.weights.fill(clampUnit(value));
    this.adjust();
  }

  setSigma(value: number): void {
    this.state.params.sigma = clampSigma(value);
    this.adjust();
  }

  setDirectionRank(rank: number | null): void {
    this.state.params.directionRank = clampRank(rank);
    this.adjust();
  }

  setGamma1(value: number | null): void {
    this.state.params.gamma1 = value === null ? null : clampUnit(value);
    this.adjust();
  }

  setGamma2(value: number | null): void {
    this.state.params.gamma2 = value === null ? null : clampUnit(value);
    this.adjust();
  }

  /** Debounced stylize with the current params; cache short-circuits. */
  private adjust(): void {
    if (this.state.image === null) {
      this.notify();
      return;
    }
    const params = clampParams(this.state.params, this.numLayers);
    const hit = this.cacheGet(params);
    if (hit !== undefined) {
      // A known parameter set renders instantly from cache; anything
      // still in flight is now stale and must not overwrite it.
      this.scheduler.invalidate();
      this.state.result = hit;
      this.state.error = null;
      this.state.canRetry = false;
      this.notify();
      return;
    }
    this.scheduler.request(cloneParams(params));
    this.notify();
  }

  /** Commit immediately (slider release, first render after upload). */
  stylizeNow(): void {
    if (this.state.image === null) return;
    const params = clampParams(this.state.params, this.numLayers);
    const hit = this.cacheGet(params);
    if (hit !== undefined) {
      this.scheduler.invalidate();
      this.state.result = hit;
      this.state.error = null;
      this.state.canRetry = false;
      this.notify();
      return;
    }
    this.scheduler.commitNow(cloneParams(params));
    this.notify();
  }

  /** Fire a pending debounce without waiting out the window. */
  flushPending(): void {
    this.scheduler.flush();
    this.notify();
  }

  retry(): void {
    if (this.retryParams === null || this.state.image === null) return;
    const params = this.retryParams;
    this.retryParams = null;
    this.state.error = null;
    this.state.canRetry = false;
    this.scheduler.commitNow(cloneParams(params));
    this.notify();
  }

  // ---- results ----

  private acceptResult(blob: Blob, params: StylizeParams, requestId: number): void {
    const result: RenderedResult = { blob, params, requestId };
    this.cachePut(params, result);
    this.state.result = result;
    this.state.error = null;
    this.state.canRetry = false;
    this.retryParams = null;
    this.notify();
  }

  private acceptError(error: unknown, params: StylizeParams): void {
    if (error instanceof ServiceError) {
      // Server-side rejection; prior image stays up so the user keeps
      // their last good render while they fix the input.
      this.state.error = { kind: "field", field: error.field, message: error.message };
      this.state.canRetry = false;
      this.retryParams = null;
    } else {
      const message = error instanceof Error ? error.message : String(error);
      this.state.error = { kind: "network", message };
      this.state.canRetry = true;
      this.retryParams = cloneParams(params);
    }
    this.notify();
  }

  cachedResult(params: StylizeParams): RenderedResult | undefined {
    return this.cacheGet(clampParams(params, this.numLayers));
  }

  get cacheSize(): number {
    return this.cache.size;
  }

  private cacheGet(params: StylizeParams): RenderedResult | undefined {
    const key = paramsKey(params);
    const hit = this.cache.get(key);
    if (hit !== undefined) {
      this.cache.delete(key);
      this.cache.set(key, hit);
    }
    return hit;
  }

  private cachePut(params: StylizeParams, result: RenderedResult): void {
    const key = paramsKey(params);
    this.cache.delete(key);
    this.cache.set(key, result);
    while (this.cache.size > CACHE_CAP) {
      const oldest = this.cache.keys().next().value as string;
      this.cache.delete(oldest);
    }
  }
}
