/**
 * Side-by-side comparison of two cached results: a parameter diff list
 * plus one viewport shared by both panes so pan and zoom stay in sync.
 */
import { StylizeParams } from "./params.js";
import { RenderedResult } from "./state.js";

export interface ParamDiffEntry {
  field: string;
  a: number | null;
  b: number | null;
}

export function paramDiff(a: StylizeParams, b: StylizeParams): ParamDiffEntry[] {
  const diffs: ParamDiffEntry[] = [];
  const layers = Math.max(a.weights.length, b.weights.length);
  for (let i = 0; i < layers; i++) {
    const wa = a.weights[i] ?? null;
    const wb = b.weights[i] ?? null;
    if (wa !== wb) diffs.push({ field: `W[${i}]`, a: wa, b: wb });
  }
  if (a.sigma !== b.sigma) diffs.push({ field: "sigma", a: a.sigma, b: b.sigma });
  if (a.directionRank !== b.directionRank) {
    diffs.push({ field: "direction_rank", a: a.directionRank, b: b.directionRank });
  }
  if (a.gamma1 !== b.gamma1) diffs.push({ field: "gamma1", a: a.gamma1, b: b.gamma1 });
  if (a.gamma2 !== b.gamma2) diffs.push({ field: "gamma2", a: a.gamma2, b: b.gamma2 });
  return diffs;
}

export interface CompareView {
  left: RenderedResult;
  right: RenderedResult;
  diffs: ParamDiffEntry[];
  noDiff: boolean;
}

export function compareView(a: RenderedResult, b: RenderedResult): CompareView {
  const diffs = paramDiff(a.params, b.params);
  return { left: a, right: b, diffs, noDiff: diffs.length === 0 };
}

/** Mirror the layout: panes trade places and each diff entry flips. */
export function swapView(view: CompareView): CompareView {
  return {
    left: view.right,
    right: view.left,
    diffs: view.diffs.map((d) => ({ field: d.field, a: d.b, b: d.a })),
    noDiff: view.noDiff,
  };
}

const SCALE_MIN = 0.25;
const SCALE_MAX = 16;

/**
 * One transform, two panes. Both images render under the same
 * translate/scale, so dragging or zooming either pane moves both.
 */
export class SyncViewport {
  scale = 1;
  x = 0;
  y = 0;

  pan(dx: number, dy: number): void {
    this.x += dx;
    this.y += dy;
  }

  /** Zoom by `factor` keeping the screen point (cx, cy) fixed. */
  zoomAt(factor: number, cx: number, cy: number): void {
    const next = Math.min(SCALE_MAX, Math.max(SCALE_MIN, this.scale * factor));
    const applied = next / this.scale;
    this.x = cx - applied * (cx - this.x);
    this.y = cy - applied * (cy - this.y);
    this.scale = next;
  }

  reset(): void {
    this.scale = 1;
    this.x = 0;
    this.y = 0;
  }

  get cssTransform(): string {
    return `translate(${this.x}px, ${this.y}px) scale(${this.scale})`;
  }
}
