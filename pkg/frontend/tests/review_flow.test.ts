/**
 * Scripted review session: a 10-item queue reviewed entirely via keyboard
 * against the mocked service contract, then the iteration is advanced and
 * the metrics screen must agree with GET /metrics.
 */

// @vitest-environment happy-dom

import { beforeEach, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { renderMetrics } from "../src/metrics.js";
import { ReviewScreen } from "../src/review.js";
import { FakeService } from "./fake_service.js";

const ITEMS = Array.from({ length: 10 }, (_, i) => `img_${String(i).padStart(2, "0")}`);

function pressKey(key: string): void {
  window.dispatchEvent(new KeyboardEvent("keydown", { key, bubbles: true }));
}

async function settle(): Promise<void> {
  // drain microtasks queued by fetch handlers
  for (let i = 0; i < 20; i++) await Promise.resolve();
}

function artifactsLoaded(screen: ReviewScreen): void {
  // happy-dom does not fetch images, so fire the load hook directly
  screen.dispatch({ type: "ARTIFACTS_LOADED" });
}

describe("keyboard-driven review flow", () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = `<div id="app"></div>`;
    root = document.getElementById("app") as HTMLElement;
  });

  it("reviews a 10-item queue via keyboard, advances, and matches metrics", async () => {
    const svc = new FakeService({
      items: ITEMS,
      records: [{ iteration: 1, n_accepted: 4, error_pct: 3.16, train_size: 720 }],
      sections: [
        { section: 1, manual: 74, predicted: 82 },
        { section: 2, manual: 142, predicted: 137 },
      ],
    });
    const api = new ReviewApi("", svc.fetch);
    let advanced = false;
    const screen = new ReviewScreen(api, "r", root, () => {
      advanced = true;
    });
    await screen.start();
    await settle();

    for (let i = 0; i < ITEMS.length; i++) {
      expect(screen.state.phase).toBe("reviewing");
      const current = screen.state.item?.image_id;
      expect(current).toBe(ITEMS[i]); // ascending image_id order
      artifactsLoaded(screen);
      pressKey(i % 2 === 0 ? "a" : "r");
      await settle();
    }

    // queue drained: the iteration-ready screen offers Advance
    expect(screen.state.phase).toBe("queue-empty");
    expect(svc.verdicts.size).toBe(10);
    expect(svc.verdicts.get("img_00")).toBe("accept");
    expect(svc.verdicts.get("img_01")).toBe("reject");

    const advanceButton = root.querySelector<HTMLButtonElement>("#advance");
    expect(advanceButton).not.toBeNull();
    advanceButton?.click();
    await settle();
    expect(advanced).toBe(true);
    expect(svc.iterations).toBe(1);
    screen.stop();

    // metrics screen renders exactly what GET /metrics returns
    const payload = await renderMetrics(api, "r", root);
    expect(payload.records).toHaveLength(1);
    const label = root.querySelector(".chart text")?.textContent;
    expect(label).toBe("3.16%");
    const totals = root.querySelector("tr.totals")?.textContent ?? "";
    expect(totals).toContain(String(74 + 142));
    expect(totals).toContain(String(82 + 137));
  });

  it("surfaces a conflicting 409 without losing data and skips forward", async () => {
    const svc = new FakeService({ items: ITEMS.slice(0, 3) });
    const api = new ReviewApi("", svc.fetch);
    const screen = new ReviewScreen(api, "r", root);
    await screen.start();
    await settle();

    artifactsLoaded(screen);
    pressKey("a"); // img_00 accepted
    await settle();

    // while img_01 is on screen a concurrent reviewer decides it first
    expect(screen.state.item?.image_id).toBe("img_01");
    svc.decideElsewhere("img_01", "reject");
    artifactsLoaded(screen);
    pressKey("a");
    await settle();
    expect(screen.state.decided["img_01"]).toBe("elsewhere");
    expect(svc.verdicts.get("img_01")).toBe("reject"); // untouched

    // the session continues with the last item
    expect(screen.state.item?.image_id).toBe("img_02");
    artifactsLoaded(screen);
    pressKey("r");
    await settle();
    expect(screen.state.phase).toBe("queue-empty");
    screen.stop();
  });

  it("shows a retry banner on network failure and loses nothing", async () => {
    const svc = new FakeService({ items: ["img_00"] });
    const api = new ReviewApi("", svc.fetch);
    const screen = new ReviewScreen(api, "r", root);
    await screen.start();
    await settle();
    artifactsLoaded(screen);

    // next submission hits a dead network
    (svc as unknown as { failBudget: number })["failBudget"] = 1;
    pressKey("a");
    await settle();
    expect(screen.state.phase).toBe("error");
    expect(root.querySelector(".retry-banner")).not.toBeNull();
    expect(svc.verdicts.size).toBe(0); // nothing recorded

    root.querySelector<HTMLButtonElement>("#retry")?.click();
    await settle();
    expect(screen.state.phase).toBe("reviewing");
    expect(screen.state.item?.image_id).toBe("img_00"); // still here
    artifactsLoaded(screen);
    pressKey("a");
    await settle();
    expect(svc.verdicts.get("img_00")).toBe("accept");
    screen.stop();
  });

  it("space toggles the overlay and disabled buttons ignore verdict keys", async () => {
    const svc = new FakeService({ items: ["img_00"] });
    const api = new ReviewApi("", svc.fetch);
    const screen = new ReviewScreen(api, "r", root);
    await screen.start();
    await settle();

    // artifacts not loaded yet: A must be ignored
    pressKey("a");
    await settle();
    expect(svc.verdicts.size).toBe(0);
    expect(root.querySelector<HTMLButtonElement>("#accept")?.disabled).toBe(true);

    expect(screen.state.overlayVisible).toBe(true);
    pressKey(" ");
    expect(screen.state.overlayVisible).toBe(false);
    screen.stop();
  });
});
