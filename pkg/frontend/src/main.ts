/**
 * Page wiring. Everything interesting lives in state.ts and friends;
 * this file just builds controls and reflects store state into the DOM.
 */
import { StudioClient } from "./api.js";
import { compareView, swapView, SyncViewport } from "./compare.js";
import { RenderedResult, StudioState, StudioStore } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function slider(min: number, max: number, step: number, value: number): HTMLInputElement {
  const input = el("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = String(step);
  input.value = String(value);
  return input;
}

function describeParams(r: RenderedResult): string {
  const p = r.params;
  const bits = [`W=[${p.weights.map((w) => w.toFixed(2)).join(", ")}]`, `sigma=${p.sigma}`];
  if (p.directionRank !== null) bits.push(`rank=${p.directionRank}`);
  if (p.gamma1 !== null) bits.push(`g1=${p.gamma1}`);
  if (p.gamma2 !== null) bits.push(`g2=${p.gamma2}`);
  return bits.join("  ");
}

class BlobUrls {
  private urls = new Map<Blob, string>();

  for(blob: Blob): string {
    let url = this.urls.get(blob);
    if (url === undefined) {
      url = URL.createObjectURL(blob);
      this.urls.set(blob, url);
    }
    return url;
  }
}

const urls = new BlobUrls();

class ComparePanel {
  root = el("div", "compare hidden");
  private slotA: RenderedResult | null = null;
  private slotB: RenderedResult | null = null;
  private flipped = false;
  private viewport = new SyncViewport();
  private panes = el("div", "panes");
  private diffList = el("div", "diffs");

  constructor() {
    const bar = el("div", "compare-bar");
    const flip = el("button", "", "Swap A/B");
    flip.onclick = () => {
      this.flipped = !this.flipped;
      this.render();
    };
    const reset = el("button", "", "Reset view");
    reset.onclick = () => {
      this.viewport.reset();
      this.applyTransform();
    };
    bar.append(flip, reset);
    this.root.append(bar, this.panes, this.diffList);

    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.panes.addEventListener("mousedown", (e) => {
      dragging = true;
      lastX = e.clientX;
      lastY = e.clientY;
    });
    window.addEventListener("mouseup", () => (dragging = false));
    window.addEventListener("mousemove", (e) => {
      if (!dragging) return;
      this.viewport.pan(e.clientX - lastX, e.clientY - lastY);
      lastX = e.clientX;
      lastY = e.clientY;
      this.applyTransform();
    });
    this.panes.addEventListener("wheel", (e) => {
      e.preventDefault();
      const rect = this.panes.getBoundingClientRect();
      const factor = e.deltaY < 0 ? 1.2 : 1 / 1.2;
      this.viewport.zoomAt(factor, e.clientX - rect.left, e.clientY - rect.top);
      this.applyTransform();
    });
  }

  pin(slot: "a" | "b", result: RenderedResult | null): void {
    if (result === null) return;
    if (slot === "a") this.slotA = result;
    else this.slotB = result;
    this.render();
  }

  private applyTransform(): void {
    for (const img of this.panes.querySelectorAll("img")) {
      (img as HTMLImageElement).style.transform = this.viewport.cssTransform;
    }
  }

  private render(): void {
    if (this.slotA === null || this.slotB === null) {
      this.root.classList.add("hidden");
      return;
    }
    this.root.classList.remove("hidden");
    let view = compareView(this.slotA, this.slotB);
    if (this.flipped) view = swapView(view);

    this.panes.textContent = "";
    for (const side of [view.left, view.right]) {
      const pane = el("div", "pane");
      const img = el("img");
      img.src = urls.for(side.blob);
      img.style.transform = this.viewport.cssTransform;
      pane.append(img, el("div", "caption", describeParams(side)));
      this.panes.append(pane);
    }

    this.diffList.textContent = "";
    if (view.noDiff) {
      this.diffList.append(el("div", "nodiff", "no diff"));
    } else {
      for (const d of view.diffs) {
        this.diffList.append(
          el("div", "diff", `${d.field}: ${d.a ?? "trained"} vs ${d.b ?? "trained"}`),
        );
      }
    }
  }
}

async function bootstrap(): Promise<void> {
  const app = document.getElementById("app") as HTMLDivElement;
  const base = new URLSearchParams(location.search).get("service") ?? "";
  const client = new StudioClient(base);

  let config;
  let health;
  try {
    config = await client.config();
    health = await client.health();
  } catch (err) {
    app.append(el("div", "error", `service unreachable: ${err}`));
    return;
  }
  const store = new StudioStore(client, config.num_layers);

  app.append(
    el("h1", "", "Style studio"),
    el("div", "meta", `checkpoint ${health.checkpoint_hash.slice(0, 12)} | ` +
      `${config.resolution}px | ${config.num_layers} layers`),
  );

  // upload
  const uploadRow = el("div", "row");
  const fileInput = el("input");
  fileInput.type = "file";
  fileInput.accept = "image/*";
  fileInput.addEventListener("change", () => {
    const file = fileInput.files && fileInput.files[0];
    if (!file) return;
    store.uploadImage(file, file.name);
    if (store.state.image !== null) store.stylizeNow();
  });
  const preview = el("img", "preview");
  uploadRow.append(fileInput, preview);
  app.append(uploadRow);

  // sliders
  const controls = el("div", "controls");
  const wSliders: HTMLInputElement[] = [];
  for (let i = 0; i < config.num_layers; i++) {
    const row = el("label", "ctl", `W[${i}]`);
    const s = slider(0, 1, 0.01, 1);
    s.addEventListener("input", () => store.setWeight(i, Number(s.value)));
    s.addEventListener("change", () => store.flushPending());
    row.append(s);
    controls.append(row);
    wSliders.push(s);
  }
  const allZero = el("button", "", "All W = 0");
  allZero.onclick = () => {
    for (const s of wSliders) s.value = "0";
    store.setAllWeights(0);
    store.flushPending();
  };
  const allOne = el("button", "", "All W = 1");
  allOne.onclick = () => {
    for (const s of wSliders) s.value = "1";
    store.setAllWeights(1);
    store.flushPending();
  };
  controls.append(allZero, allOne);

  const sigmaRow = el("label", "ctl", "sigma");
  const sigmaSlider = slider(-10, 10, 0.1, 0);
  sigmaSlider.addEventListener("input", () => store.setSigma(Number(sigmaSlider.value)));
  sigmaSlider.addEventListener("change", () => store.flushPending());
  sigmaRow.append(sigmaSlider);
  controls.append(sigmaRow);

  const rankRow = el("label", "ctl", "direction");
  const rankSelect = el("select");
  const noneOpt = el("option", "", "none");
  noneOpt.value = "";
  rankSelect.append(noneOpt);
  try {
    for (const d of await client.directions(8)) {
      const opt = el("option", "", `rank ${d.rank} (ev ${d.eigenvalue.toFixed(3)})`);
      opt.value = String(d.rank);
      rankSelect.append(opt);
    }
  } catch {
    // factorization needs a mapping net; leave the picker empty if the
    // service cannot produce directions
  }
  rankSelect.addEventListener("change", () => {
    store.setDirectionRank(rankSelect.value === "" ? null : Number(rankSelect.value));
    store.flushPending();
  });
  rankRow.append(rankSelect);
  controls.append(rankRow);

  for (const [name, setter] of [
    ["gamma1", (v: number | null) => store.setGamma1(v)],
    ["gamma2", (v: number | null) => store.setGamma2(v)],
  ] as const) {
    const row = el("label", "ctl", name);
    const override = el("input");
    override.type = "checkbox";
    const s = slider(0, 1, 0.01, 1);
    s.disabled = true;
    const apply = () => {
      setter(override.checked ? Number(s.value) : null);
      s.disabled = !override.checked;
    };
    override.addEventListener("change", () => {
      apply();
      store.flushPending();
    });
    s.addEventListener("input", apply);
    s.addEventListener("change", () => store.flushPending());
    row.append(override, s);
    controls.append(row);
  }
  app.append(controls);

  // result + status
  const status = el("div", "status");
  const errorBox = el("div", "error hidden");
  const retryBtn = el("button", "hidden", "Retry");
  retryBtn.onclick = () => store.retry();
  const resultImg = el("img", "result");
  const attribution = el("div", "attribution");
  app.append(status, errorBox, retryBtn, resultImg, attribution);

  // compare
  const compare = new ComparePanel();
  const pinRow = el("div", "row");
  const pinA = el("button", "", "Pin A");
  pinA.onclick = () => compare.pin("a", store.state.result);
  const pinB = el("button", "", "Pin B");
  pinB.onclick = () => compare.pin("b", store.state.result);
  pinRow.append(pinA, pinB);
  app.append(pinRow, compare.root);

  store.subscribe((state: StudioState) => {
    if (state.image !== null) preview.src = urls.for(state.image.blob);
    status.textContent = state.inFlight ? "rendering..." : "";
    if (state.error !== null) {
      errorBox.classList.remove("hidden");
      errorBox.textContent =
        state.error.kind === "field"
          ? `${state.error.field}: ${state.error.message}`
          : state.error.message;
    } else {
      errorBox.classList.add("hidden");
    }
    retryBtn.classList.toggle("hidden", !state.canRetry);
    if (state.result !== null) {
      resultImg.src = urls.for(state.result.blob);
      attribution.textContent = describeParams(state.result);
    }
  });
}

void bootstrap();
