/**
 * Review session state machine, kept pure so the verdict flow is testable
 * without a DOM or a live service.
 *
 * Invariant: a verdict appears in `decided` only after the service has
 * durably acknowledged it (RECORDED) or reported a conflicting decision
 * (CONFLICT).  Network failures keep the current item so nothing is lost.
 */

import type { QueueItem, VerdictValue } from "./types.js";

export type Phase =
  | "loading"
  | "reviewing"
  | "submitting"
  | "queue-empty"
  | "error";

export interface SessionState {
  runId: string;
  phase: Phase;
  item: QueueItem | null;
  pendingVerdict: VerdictValue | null;
  overlayVisible: boolean;
  artifactsLoaded: boolean;
  reviewed: number;
  remaining: number | null;
  decided: Record<string, VerdictValue | "elsewhere">;
  lastError: string | null;
}

export type SessionEvent =
  | { type: "ITEM"; item: QueueItem; remaining: number | null }
  | { type: "QUEUE_EMPTY" }
  | { type: "ARTIFACTS_LOADED" }
  | { type: "SUBMIT"; verdict: VerdictValue }
  | { type: "RECORDED"; imageId: string; verdict: VerdictValue }
  | { type: "CONFLICT"; imageId: string }
  | { type: "NETWORK_ERROR"; message: string }
  | { type: "RETRY" }
  | { type: "TOGGLE_OVERLAY" };

export function initialSession(runId: string): SessionState {
  return {
    runId,
    phase: "loading",
    item: null,
    pendingVerdict: null,
    overlayVisible: true,
    artifactsLoaded: false,
    reviewed: 0,
    remaining: null,
    decided: {},
    lastError: null,
  };
}

export function reduce(state: SessionState, event: SessionEvent): SessionState {
  switch (event.type) {
    case "ITEM":
      return {
        ...state,
        phase: "reviewing",
        item: event.item,
        pendingVerdict: null,
        artifactsLoaded: false,
        remaining: event.remaining,
        lastError: null,
      };
    case "QUEUE_EMPTY":
      return { ...state, phase: "queue-empty", item: null, pendingVerdict: null };
    case "ARTIFACTS_LOADED":
      return { ...state, artifactsLoaded: true };
    case "SUBMIT":
      // verdicts are accepted only while an item is loaded and displayable
      if (state.phase !== "reviewing" || !state.item || !state.artifactsLoaded) {
        return state;
      }
      return { ...state, phase: "submitting", pendingVerdict: event.verdict };
    case "RECORDED": {
      if (!state.item || state.item.image_id !== event.imageId) return state;
      return {
        ...state,
        phase: "loading",
        decided: { ...state.decided, [event.imageId]: event.verdict },
        reviewed: state.reviewed + 1,
        item: null,
        pendingVerdict: null,
      };
    }
    case "CONFLICT": {
      // someone else decided it first; skip forward, nothing is lost
      if (!state.item || state.item.image_id !== event.imageId) return state;
      return {
        ...state,
        phase: "loading",
        decided: { ...state.decided, [event.imageId]: "elsewhere" },
        item: null,
        pendingVerdict: null,
      };
    }
    case "NETWORK_ERROR":
      // keep the item: the verdict was never acknowledged, so it is retried
      return { ...state, phase: "error", lastError: event.message };
    case "RETRY":
      return {
        ...state,
        phase: state.item ? "reviewing" : "loading",
        lastError: null,
        pendingVerdict: null,
      };
    case "TOGGLE_OVERLAY":
      return { ...state, overlayVisible: !state.overlayVisible };
    default:
      return state;
  }
}

export function progressFraction(state: SessionState): number | null {
  if (state.remaining === null) return null;
  const total = state.reviewed + state.remaining;
  return total === 0 ? 1 : state.reviewed / total;
}
