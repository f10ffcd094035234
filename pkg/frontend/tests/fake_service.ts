/**
 * In-memory stand-in implementing the slice of the service contract the UI
 * depends on: deterministic queue order, durable verdicts, 409 on
 * conflicts, 204 on drain, iterate barrier, metrics.
 */

import type { FetchLike } from "../src/api.js";
import type { IterationRecord, SectionRow } from "../src/types.js";

export interface FakeOptions {
  items: string[];
  records?: IterationRecord[];
  sections?: SectionRow[];
  failNextRequests?: number;
}

export class FakeService {
  verdicts = new Map<string, string>();
  iterations = 0;
  records: IterationRecord[];
  sections: SectionRow[];
  private failBudget: number;

  constructor(private readonly opts: FakeOptions) {
    this.records = opts.records ?? [];
    this.sections = opts.sections ?? [];
    this.failBudget = opts.failNextRequests ?? 0;
  }

  pending(): string[] {
    return this.opts.items.filter((i) => !this.verdicts.has(i)).sort();
  }

  /** Pre-decide an item, as a concurrent reviewer would. */
  decideElsewhere(imageId: string, verdict: string): void {
    this.verdicts.set(imageId, verdict);
  }

  fetch: FetchLike = async (input, init) => {
    if (this.failBudget > 0) {
      this.failBudget -= 1;
      throw new TypeError("network down");
    }
    const url = new URL(input, "http://fake");
    const path = url.pathname;
    const method = init?.method ?? "GET";

    if (method === "GET" && /^\/runs\/[^/]+$/.test(path)) {
      return json(200, {
        run_id: path.split("/")[2],
        iteration: this.iterations,
        review_iteration: 1,
        queue_remaining: this.pending().length,
        records: this.records,
        status: "awaiting-review",
        error: null,
      });
    }
    if (method === "GET" && path.endsWith("/queue/next")) {
      const next = this.pending()[0];
      if (!next) return new Response(null, { status: 204 });
      return json(200, {
        image_id: next,
        iteration: 1,
        status: "pending",
        edf_url: `/runs/r/images/${next}/edf`,
        mask_url: `/runs/r/images/${next}/mask`,
        overlay_url: `/runs/r/images/${next}/overlay`,
        annotation_url: `/runs/r/images/${next}/annotation`,
      });
    }
    if (method === "POST" && path.endsWith("/review")) {
      const body = JSON.parse(String(init?.body)) as { image_id: string; verdict: string };
      const existing = this.verdicts.get(body.image_id);
      if (existing && existing !== body.verdict) {
        return json(409, { error: `${body.image_id} already ${existing}ed` });
      }
      this.verdicts.set(body.image_id, body.verdict);
      return json(200, { status: body.verdict + "ed", remaining: this.pending().length });
    }
    if (method === "POST" && path.endsWith("/iterate")) {
      if (this.pending().length > 0) {
        return json(409, { error: "pending items: " + this.pending().join(", ") });
      }
      this.iterations += 1;
      return json(200, {
        run_id: "r",
        iteration: this.iterations,
        review_iteration: null,
        queue_remaining: 0,
        records: this.records,
        status: "idle",
        error: null,
      });
    }
    if (method === "GET" && path.endsWith("/metrics")) {
      return json(200, {
        records: this.records,
        sections: this.sections.length
          ? [{ iteration: this.iterations, rows: this.sections }]
          : [],
      });
    }
    return json(404, { error: `no such route ${method} ${path}` });
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
