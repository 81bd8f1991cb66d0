/**
 * Thin client for the stylization service. No state beyond a wire log;
 * all model work happens server-side.
 */
import { StylizeParams, toWire } from "./params.js";

export interface HealthInfo {
  status: string;
  checkpoint_hash: string;
}

export interface ServiceConfig {
  resolution: number;
  num_layers: number;
  gamma1: number;
  gamma2: number;
  [key: string]: unknown;
}

export interface DirectionRow {
  rank: number;
  eigenvalue: number;
  vector: number[];
}

/** A 422 from the service, field-addressed. */
export class ServiceError extends Error {
  constructor(
    readonly code: string,
    readonly field: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

/** One POST /stylize as it went on the wire, kept for auditing. */
export interface WireRecord {
  params: Record<string, unknown>;
  imageBytes: number;
  status: number | "network-error";
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseServiceError(resp: Response): Promise<never> {
  let body: unknown = null;
  try {
    body = await resp.json();
  } catch {
    // fall through to the generic error below
  }
  if (body && typeof body === "object" && "code" in body) {
    const e = body as { code: string; field: string; message: string };
    throw new ServiceError(e.code, e.field, e.message, resp.status);
  }
  throw new ServiceError("http_error", "request", `HTTP ${resp.status}`, resp.status);
}

export class StudioClient {
  readonly requestLog: WireRecord[] = [];
  private fetchImpl: FetchLike;

  constructor(readonly baseUrl: string, fetchImpl?: FetchLike) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  async health(): Promise<HealthInfo> {
    const resp = await this.fetchImpl(`${this.baseUrl}/health`);
    if (!resp.ok) await raiseServiceError(resp);
    return (await resp.json()) as HealthInfo;
  }

  async config(): Promise<ServiceConfig> {
    const resp = await this.fetchImpl(`${this.baseUrl}/config`);
    if (!resp.ok) await raiseServiceError(resp);
    return (await resp.json()) as ServiceConfig;
  }

  async directions(top: number): Promise<DirectionRow[]> {
    const resp = await this.fetchImpl(`${this.baseUrl}/directions?top=${top}`);
    if (!resp.ok) await raiseServiceError(resp);
    return (await resp.json()) as DirectionRow[];
  }

  /**
   * POST /stylize with the image and a parameter set. The caller is
   * responsible for clamping; this method records whatever it sends so
   * tests can audit the wire.
   */
  async stylize(image: Blob, params: StylizeParams): Promise<Blob> {
    const wire = toWire(params);
    const record: WireRecord = {
      params: wire,
      imageBytes: image.size,
      status: "network-error",
    };
    this.requestLog.push(record);

    const form = new FormData();
    form.append("image", image, "input.png");
    form.append("params", JSON.stringify(wire));

    const resp = await this.fetchImpl(`${this.baseUrl}/stylize`, {
      method: "POST",
      body: form,
    });
    record.status = resp.status;
    if (!resp.ok) await raiseServiceError(resp);
    return await resp.blob();
  }
}
