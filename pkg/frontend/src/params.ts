/**
 * Stylize parameters and the client-side clamps that mirror what the
 * server will accept. Every request body passes through `clampParams`
 * before it is serialized, so out-of-range slider values never reach
 * the wire.
 */

export interface StylizeParams {
  /** Per-layer blend weights, length `numLayers`, each in [0, 1]. */
  weights: number[];
  /** Semantic edit intensity; any finite number. */
  sigma: number;
  /** Rank of the semantic direction to walk, 0 = principal. */
  directionRank: number | null;
  /** Gate overrides in [0, 1]; null keeps the checkpoint's trained gate. */
  gamma1: number | null;
  gamma2: number | null;
}

export function defaultParams(numLayers: number): StylizeParams {
  return {
    weights: new Array(numLayers).fill(1),
    sigma: 0,
    directionRank: null,
    gamma1: null,
    gamma2: null,
  };
}

export function clampUnit(v: number): number {
  if (!Number.isFinite(v)) return 0;
  return Math.min(1, Math.max(0, v));
}

export function clampSigma(v: number): number {
  // Server only demands a finite number; the slider itself stays in a
  // sane band so a fat-fingered keyboard entry cannot blow the edit up.
  if (!Number.isFinite(v)) return 0;
  return Math.min(SIGMA_MAX, Math.max(-SIGMA_MAX, v));
}

export function clampRank(v: number | null): number | null {
  if (v === null) return null;
  if (!Number.isFinite(v)) return null;
  return Math.max(0, Math.round(v));
}

export const SIGMA_MAX = 10;

/** Normalize a whole parameter set to the ranges the server validates. */
export function clampParams(p: StylizeParams, numLayers: number): StylizeParams {
  const weights = new Array<number>(numLayers);
  for (let i = 0; i < numLayers; i++) {
    weights[i] = clampUnit(p.weights[i] ?? 1);
  }
  return {
    weights,
    sigma: clampSigma(p.sigma),
    directionRank: clampRank(p.directionRank),
    gamma1: p.gamma1 === null ? null : clampUnit(p.gamma1),
    gamma2: p.gamma2 === null ? null : clampUnit(p.gamma2),
  };
}

/** The JSON body the service expects in the `params` form field. */
export function toWire(p: StylizeParams): Record<string, unknown> {
  const body: Record<string, unknown> = {
    weights: p.weights,
    sigma: p.sigma,
  };
  if (p.directionRank !== null) body.direction_rank = p.directionRank;
  if (p.gamma1 !== null) body.gamma1 = p.gamma1;
  if (p.gamma2 !== null) body.gamma2 = p.gamma2;
  return body;
}

/** Canonical key for caching results; equal params give equal keys. */
export function paramsKey(p: StylizeParams): string {
  return JSON.stringify([p.weights, p.sigma, p.directionRank, p.gamma1, p.gamma2]);
}

export function paramsEqual(a: StylizeParams, b: StylizeParams): boolean {
  return paramsKey(a) === paramsKey(b);
}

export function cloneParams(p: StylizeParams): StylizeParams {
  return { ...p, weights: p.weights.slice() };
}
