import { describe, expect, it } from "vitest";
import { StudioClient } from "../src/api.js";
import { SIGMA_MAX } from "../src/params.js";
import { StudioState, StudioStore } from "../src/state.js";
import { blobText, errorResponse, FakeWire, pngResponse, tick } from "./helpers.js";

const L = 4;

function makeStore(debounceMs = 0) {
  const wire = new FakeWire();
  const client = new StudioClient("http://svc", wire.fetch);
  const store = new StudioStore(client, L, debounceMs);
  const states: StudioState[] = [];
  const renders: string[] = []; // identity trail of every displayed result
  store.subscribe((s) => {
    states.push({ ...s });
    if (s.result !== null) {
      const tag = `${s.result.requestId}:${JSON.stringify(s.result.params.weights)}`;
      if (renders[renders.length - 1] !== tag) renders.push(tag);
    }
  });
  return { wire, client, store, states, renders };
}

function probe(): Blob {
  return new Blob([new Uint8Array([0x89, 0x50, 0x4e, 0x47])], { type: "image/png" });
}

describe("upload", () => {
  it("accepts a non-empty file and shows it", () => {
    const { store } = makeStore();
    store.uploadImage(probe(), "face.png");
    expect(store.state.image?.name).toBe("face.png");
    expect(store.state.error).toBeNull();
  });

  it("rejects a 0-byte file inline and leaves the rest of the state alone", async () => {
    const { store, wire } = makeStore();
    store.uploadImage(probe(), "good.png");
    store.stylizeNow();
    wire.take().respond(pngResponse("img"));
    await tick();
    const before = store.state.result;

    store.uploadImage(new Blob([]), "empty.png");
    expect(store.state.error).toEqual({ kind: "upload", message: "empty.png is empty" });
    expect(store.state.image?.name).toBe("good.png");
    expect(store.state.result).toBe(before);
    expect(wire.queue.length).toBe(0);
  });

  it("a fresh upload clears result, error and cache", async () => {
    const { store, wire } = makeStore();
    store.uploadImage(probe(), "a.png");
    store.stylizeNow();
    wire.take().respond(pngResponse("img-a"));
    await tick();
    expect(store.cacheSize).toBe(1);

    store.uploadImage(probe(), "b.png");
    expect(store.state.result).toBeNull();
    expect(store.cacheSize).toBe(0);

    // same params must hit the wire again for the new image
    store.stylizeNow();
    expect(wire.queue.length).toBe(1);
  });
});

describe("slider input", () => {
  it("does nothing without an image", () => {
    const { store, wire } = makeStore();
    store.setWeight(0, 0.5);
    store.setSigma(2);
    store.flushPending();
    expect(wire.log.length).toBe(0);
  });

  it("clamps every control before anything reaches the wire", async () => {
    const { store, wire, client } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.setWeight(0, 5);
    store.setWeight(1, -2);
    store.setSigma(1e9);
    store.setGamma1(7);
    store.setGamma2(-0.25);
    store.setDirectionRank(-3);
    store.flushPending();
    wire.take().respond(pngResponse("img"));
    await tick();

    expect(client.requestLog.length).toBe(1);
    const sent = client.requestLog[0]!.params;
    expect(sent.weights).toEqual([1, 0, 1, 1]);
    expect(sent.sigma).toBe(SIGMA_MAX);
    expect(sent.gamma1).toBe(1);
    expect(sent.gamma2).toBe(0);
    expect(sent.direction_rank).toBe(0);
  });

  it("state params stay clamped too, not only the wire copy", () => {
    const { store } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.setWeight(2, 99);
    store.setSigma(NaN);
    expect(store.state.params.weights[2]).toBe(1);
    expect(store.state.params.sigma).toBe(0);
  });

  it("ignores weight indices outside the layer range", () => {
    const { store } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.setWeight(17, 0.5);
    store.setWeight(-1, 0.5);
    expect(store.state.params.weights).toEqual([1, 1, 1, 1]);
  });
});

describe("latest-wins rendering", () => {
  it("only the newest request's result renders on a mid-flight move", async () => {
    const { store, wire, renders } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.setAllWeights(0.3);
    store.flushPending(); // request A in flight
    store.setAllWeights(0.9);
    store.flushPending(); // B queued behind A

    wire.take().respond(pngResponse("img-a"));
    await tick();
    wire.take().respond(pngResponse("img-b"));
    await tick();

    expect(store.state.result?.params.weights).toEqual([0.9, 0.9, 0.9, 0.9]);
    expect(await blobText(store.state.result!.blob)).toBe("img-b");
    // the 0.3 render was discarded, so it never appears in the trail
    expect(renders.some((r) => r.includes("0.3"))).toBe(false);
    expect(store.state.inFlight).toBe(false);
  });

  it("displayed attribution always matches the producing request", async () => {
    const { store, wire } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.setSigma(1.5);
    store.flushPending();
    // user keeps moving while the request is out
    store.setSigma(4);

    wire.take().respond(pngResponse("img-1.5"));
    await tick();
    // a newer desire exists only as an armed debounce timer; the response
    // for 1.5 is still the newest commit, so it renders as itself
    expect(store.state.result?.params.sigma).toBe(1.5);
    expect(store.state.params.sigma).toBe(4);

    store.flushPending();
    wire.take().respond(pngResponse("img-4"));
    await tick();
    expect(store.state.result?.params.sigma).toBe(4);
  });
});

describe("failures", () => {
  it("network failure keeps the prior image and offers a retry", async () => {
    const { store, wire, client } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.stylizeNow();
    wire.take().respond(pngResponse("img-good"));
    await tick();
    const good = store.state.result;

    store.setSigma(2);
    store.flushPending();
    wire.take().fail(new TypeError("fetch failed"));
    await tick();

    expect(store.state.error?.kind).toBe("network");
    expect(store.state.canRetry).toBe(true);
    expect(store.state.result).toBe(good);

    store.retry();
    expect(wire.queue.length).toBe(1);
    wire.take().respond(pngResponse("img-retry"));
    await tick();
    expect(store.state.error).toBeNull();
    expect(store.state.result?.params.sigma).toBe(2);
    // retry re-sent the identical parameter set
    const [first, second] = client.requestLog.slice(-2);
    expect(second!.params).toEqual(first!.params);
  });

  it("a server 422 surfaces as a field-level error without retry", async () => {
    const { store, wire } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.stylizeNow();
    wire.take().respond(errorResponse(422, "decode_error", "image", "could not decode image"));
    await tick();

    expect(store.state.error).toEqual({
      kind: "field",
      field: "image",
      message: "could not decode image",
    });
    expect(store.state.canRetry).toBe(false);
  });
});

describe("result cache", () => {
  it("gamma A/B toggling caches both renders and flips without re-fetching", async () => {
    const { store, wire, client } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.setGamma1(0);
    store.flushPending();
    wire.take().respond(pngResponse("img-g0"));
    await tick();
    store.setGamma1(1);
    store.flushPending();
    wire.take().respond(pngResponse("img-g1"));
    await tick();
    expect(store.cacheSize).toBe(2);
    const fetchesSoFar = client.requestLog.length;

    store.setGamma1(0);
    expect(await blobText(store.state.result!.blob)).toBe("img-g0");
    expect(store.state.result?.params.gamma1).toBe(0);
    store.setGamma1(1);
    expect(await blobText(store.state.result!.blob)).toBe("img-g1");
    expect(store.state.result?.params.gamma1).toBe(1);
    expect(client.requestLog.length).toBe(fetchesSoFar);
    expect(wire.queue.length).toBe(0);
  });

  it("a cache hit shields the display from a late in-flight response", async () => {
    const { store, wire } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.setSigma(0);
    store.stylizeNow();
    wire.take().respond(pngResponse("img-s0"));
    await tick();

    store.setSigma(3); // miss, goes to the wire
    store.flushPending();
    store.setSigma(0); // hit, displays instantly
    expect(await blobText(store.state.result!.blob)).toBe("img-s0");

    // the sigma=3 response lands afterwards and must not clobber the hit
    wire.take().respond(pngResponse("img-s3"));
    await tick();
    expect(await blobText(store.state.result!.blob)).toBe("img-s0");
    expect(store.state.result?.params.sigma).toBe(0);
  });

  it("stylizeNow serves from cache as well", async () => {
    const { store, wire, client } = makeStore();
    store.uploadImage(probe(), "x.png");
    store.stylizeNow();
    wire.take().respond(pngResponse("img"));
    await tick();
    const n = client.requestLog.length;
    store.stylizeNow();
    expect(client.requestLog.length).toBe(n);
    expect(store.state.result).not.toBeNull();
  });
});
