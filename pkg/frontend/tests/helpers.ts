/** Shared wire fakes for driving the client without a server. */

export interface Pending {
  url: string;
  init?: RequestInit;
  respond: (r: Response) => void;
  fail: (e: unknown) => void;
}

export class FakeWire {
  /** Every fetch seen, in order, whether answered or not. */
  log: Array<{ url: string; init?: RequestInit }> = [];
  /** Unanswered fetches, FIFO. */
  queue: Pending[] = [];
  /** When set, fetches are answered immediately through this. */
  handler: ((url: string, init?: RequestInit) => Response) | null = null;

  fetch = (url: string, init?: RequestInit): Promise<Response> => {
    this.log.push({ url, init });
    if (this.handler !== null) {
      return Promise.resolve(this.handler(url, init));
    }
    return new Promise<Response>((respond, fail) => {
      this.queue.push({ url, init, respond, fail });
    });
  };

  /** Take the oldest unanswered fetch. */
  take(): Pending {
    const p = this.queue.shift();
    if (p === undefined) throw new Error("no pending fetch");
    return p;
  }
}

export function pngResponse(tag: string): Response {
  // not a real PNG; the client never inspects the bytes
  return new Response(new Blob([tag], { type: "image/png" }), {
    status: 200,
    headers: { "content-type": "image/png" },
  });
}

export function errorResponse(
  status: number,
  code: string,
  field: string,
  message: string,
): Response {
  return new Response(JSON.stringify({ code, field, message }), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function jsonResponse(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { "content-type": "application/json" },
  });
}

/** Let the fetch/blob/callback promise chain run to completion. */
export function tick(): Promise<void> {
  return new Promise((r) => setTimeout(r, 0));
}

export async function blobText(blob: Blob): Promise<string> {
  return await blob.text();
}
