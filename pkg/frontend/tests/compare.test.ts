// @vitest-environment happy-dom

import { describe, expect, it } from "vitest";

import { CompareView, cssTransform, panBy, zoomAt } from "../src/compare.js";

describe("compare view transforms", () => {
  it("keeps the zoom anchor stationary", () => {
    const t0 = { scale: 1, tx: 0, ty: 0 };
    const t1 = zoomAt(t0, 100, 50, 2);
    // the screen point (100, 50) maps to the same content point before/after
    const before = { x: (100 - t0.tx) / t0.scale, y: (50 - t0.ty) / t0.scale };
    const after = { x: (100 - t1.tx) / t1.scale, y: (50 - t1.ty) / t1.scale };
    expect(after.x).toBeCloseTo(before.x, 10);
    expect(after.y).toBeCloseTo(before.y, 10);
    expect(t1.scale).toBe(2);
  });

  it("clamps extreme zoom and composes pans", () => {
    let t = { scale: 1, tx: 0, ty: 0 };
    for (let i = 0; i < 40; i++) t = zoomAt(t, 0, 0, 2);
    expect(t.scale).toBeLessThanOrEqual(32);
    t = panBy(panBy(t, 5, -3), -2, 10);
    expect(t.tx).toBe(3);
    expect(t.ty).toBe(7);
    expect(cssTransform(t)).toContain("translate(3px, 7px)");
  });

  it("applies one shared transform to both panels", () => {
    document.body.innerHTML = `<div id="c"></div>`;
    const view = new CompareView(
      document.getElementById("c") as HTMLElement,
      "/left.png",
      "/right.png",
    );
    expect(view.panels).toHaveLength(2);
    view.setTransform({ scale: 3, tx: 12, ty: -4 });
    const styles = view.panels.map((p) => p.style.transform);
    expect(styles[0]).toBe(styles[1]);
    expect(styles[0]).toContain("scale(3)");
  });

  it("falls back to a single panel when the classical mask is missing", () => {
    document.body.innerHTML = `<div id="c"></div>`;
    const view = new CompareView(
      document.getElementById("c") as HTMLElement,
      null,
      "/right.png",
    );
    expect(view.isFallback).toBe(true);
    expect(view.panels).toHaveLength(1);
  });
});
