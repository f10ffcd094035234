/**
 * Review screen: shows the current item's overlay, accepts keyboard or
 * button verdicts, advances the iteration when the queue drains.
 */

import { ApiError, ReviewApi } from "./api.js";
import { mapKey } from "./keyboard.js";
import {
  initialSession,
  progressFraction,
  reduce,
  type SessionEvent,
  type SessionState,
} from "./session.js";
import type { VerdictValue } from "./types.js";

export class ReviewScreen {
  state: SessionState;
  private keyListener = (e: KeyboardEvent) => this.handleKey(e);

  constructor(
    private readonly api: ReviewApi,
    runId: string,
    private readonly root: HTMLElement,
    private readonly onAdvanced: () => void = () => {},
  ) {
    this.state = initialSession(runId);
  }

  dispatch(event: SessionEvent): void {
    this.state = reduce(this.state, event);
    this.render();
  }

  async start(): Promise<void> {
    window.addEventListener("keydown", this.keyListener);
    this.render();
    await this.fetchNext();
  }

  stop(): void {
    window.removeEventListener("keydown", this.keyListener);
  }

  handleKey(event: KeyboardEvent): void {
    const action = mapKey(event);
    if (!action) return;
    event.preventDefault();
    if (action === "toggle-overlay") {
      this.dispatch({ type: "TOGGLE_OVERLAY" });
    } else {
      void this.submit(action);
    }
  }

  async fetchNext(): Promise<void> {
    try {
      const summary = await this.api.getRun(this.state.runId);
      const next = await this.api.nextItem(this.state.runId);
      if (next === "empty") {
        this.dispatch({ type: "QUEUE_EMPTY" });
      } else {
        this.dispatch({ type: "ITEM", item: next, remaining: summary.queue_remaining });
      }
    } catch (err) {
      this.dispatch({ type: "NETWORK_ERROR", message: describe(err) });
    }
  }

  async submit(verdict: VerdictValue): Promise<void> {
    const item = this.state.item;
    if (this.state.phase !== "reviewing" || !item || !this.state.artifactsLoaded) {
      return;
    }
    this.dispatch({ type: "SUBMIT", verdict });
    try {
      const outcome = await this.api.submitVerdict(this.state.runId, item.image_id, verdict);
      if (outcome === "conflict") {
        this.dispatch({ type: "CONFLICT", imageId: item.image_id });
      } else {
        this.dispatch({ type: "RECORDED", imageId: item.image_id, verdict });
      }
      await this.fetchNext();
    } catch (err) {
      this.dispatch({ type: "NETWORK_ERROR", message: describe(err) });
    }
  }

  async retry(): Promise<void> {
    this.dispatch({ type: "RETRY" });
    if (!this.state.item) await this.fetchNext();
  }

  async advance(): Promise<void> {
    try {
      await this.api.advance(this.state.runId);
      this.onAdvanced();
    } catch (err) {
      this.dispatch({ type: "NETWORK_ERROR", message: describe(err) });
    }
  }

  render(): void {
    const s = this.state;
    const frac = progressFraction(s);
    const progress =
      frac === null ? "" : `<progress max="1" value="${frac.toFixed(3)}"></progress>
       <span class="progress-text">${s.reviewed} reviewed, ${s.remaining ?? "?"} remaining</span>`;

    if (s.phase === "queue-empty") {
      this.root.innerHTML = `
        <div class="empty-screen">
          <h2>Iteration ready</h2>
          <p>Every queued mask has a verdict.</p>
          <button id="advance">Advance iteration</button>
        </div>`;
      this.root.querySelector("#advance")?.addEventListener("click", () => void this.advance());
      return;
    }
    if (s.phase === "error") {
      this.root.innerHTML = `
        <div class="retry-banner" role="alert">
          <p>Connection problem: ${escapeHtml(s.lastError ?? "unknown")}.
             Nothing was lost; your verdict is only counted once the server confirms it.</p>
          <button id="retry">Retry</button>
        </div>`;
      this.root.querySelector("#retry")?.addEventListener("click", () => void this.retry());
      return;
    }
    if (!s.item) {
      this.root.innerHTML = `<p class="loading">Loading next item…</p>`;
      return;
    }

    const item = s.item;
    const shownUrl = s.overlayVisible ? item.overlay_url : item.edf_url;
    const disabled = s.artifactsLoaded && s.phase === "reviewing" ? "" : "disabled";
    this.root.innerHTML = `
      <div class="review-screen">
        <header>
          <span class="image-id">${escapeHtml(item.image_id)}</span>
          <span class="iteration">iteration ${item.iteration}</span>
          ${progress}
        </header>
        <figure class="viewer">
          <img id="artifact" src="${this.api.url(shownUrl)}" alt="predicted mask overlay" />
        </figure>
        <footer>
          <button id="accept" ${disabled}>Accept (A)</button>
          <button id="reject" ${disabled}>Reject (R)</button>
          <button id="toggle">Overlay (space): ${s.overlayVisible ? "on" : "off"}</button>
        </footer>
      </div>`;
    const img = this.root.querySelector<HTMLImageElement>("#artifact");
    img?.addEventListener("load", () => this.dispatch({ type: "ARTIFACTS_LOADED" }));
    this.root.querySelector("#accept")?.addEventListener("click", () => void this.submit("accept"));
    this.root.querySelector("#reject")?.addEventListener("click", () => void this.submit("reject"));
    this.root.querySelector("#toggle")?.addEventListener("click", () =>
      this.dispatch({ type: "TOGGLE_OVERLAY" }),
    );
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.status}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}
