/**
 * Typed client over the review service.
 *
 * A verdict is only reported as recorded when the service answers 200;
 * a 409 means someone else decided the item first.
 */

import type { MetricsPayload, QueueItem, RunSummary, VerdictValue } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export type VerdictOutcome = "recorded" | "conflict";
export type NextResult = QueueItem | "empty";

async function errorMessage(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: string };
    return body.error ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.url(path));
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return (await resp.json()) as T;
  }

  getRun(runId: string): Promise<RunSummary> {
    return this.getJson(`/runs/${runId}`);
  }

  async nextItem(runId: string): Promise<NextResult> {
    const resp = await this.fetchImpl(this.url(`/runs/${runId}/queue/next`));
    if (resp.status === 204) return "empty";
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return (await resp.json()) as QueueItem;
  }

  async submitVerdict(
    runId: string,
    imageId: string,
    verdict: VerdictValue,
    reviewer = "web",
  ): Promise<VerdictOutcome> {
    const resp = await this.fetchImpl(this.url(`/runs/${runId}/review`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image_id: imageId, verdict, reviewer }),
    });
    if (resp.status === 409) return "conflict";
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return "recorded";
  }

  async advance(runId: string, startNext = true, force = false): Promise<RunSummary> {
    const resp = await this.fetchImpl(this.url(`/runs/${runId}/iterate`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ force, start_next: startNext }),
    });
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return (await resp.json()) as RunSummary;
  }

  metrics(runId: string): Promise<MetricsPayload> {
    return this.getJson(`/runs/${runId}/metrics`);
  }
}
