/**
 * Side-by-side comparison of the classical mask and the model's mask with
 * synchronized pan/zoom.  When the classical mask is missing the view
 * falls back to a single panel.
 */

export interface Transform {
  scale: number;
  tx: number;
  ty: number;
}

export function zoomAt(t: Transform, cx: number, cy: number, factor: number): Transform {
  const scale = Math.min(Math.max(t.scale * factor, 0.25), 32);
  const applied = scale / t.scale;
  // keep the zoom anchor (cx, cy) stationary on screen
  return {
    scale,
    tx: cx - (cx - t.tx) * applied,
    ty: cy - (cy - t.ty) * applied,
  };
}

export function panBy(t: Transform, dx: number, dy: number): Transform {
  return { ...t, tx: t.tx + dx, ty: t.ty + dy };
}

export function cssTransform(t: Transform): string {
  return `translate(${t.tx}px, ${t.ty}px) scale(${t.scale})`;
}

export class CompareView {
  transform: Transform = { scale: 1, tx: 0, ty: 0 };
  readonly panels: HTMLImageElement[] = [];
  private dragging: { x: number; y: number } | null = null;

  constructor(
    private readonly root: HTMLElement,
    leftSrc: string | null,
    rightSrc: string,
  ) {
    const sources = leftSrc ? [leftSrc, rightSrc] : [rightSrc];
    this.root.innerHTML = `
      <div class="compare ${leftSrc ? "" : "single-panel"}">
        ${sources
          .map(
            (src, i) => `<figure class="panel"><img data-panel="${i}" src="${src}"
              alt="${i === 0 && leftSrc ? "classical mask" : "predicted mask"}"/></figure>`,
          )
          .join("")}
      </div>`;
    this.root.querySelectorAll<HTMLImageElement>("img[data-panel]").forEach((img) => {
      this.panels.push(img);
    });
    const container = this.root.querySelector<HTMLElement>(".compare");
    container?.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.setTransform(zoomAt(this.transform, e.offsetX, e.offsetY, e.deltaY < 0 ? 1.2 : 1 / 1.2));
    });
    container?.addEventListener("mousedown", (e) => {
      this.dragging = { x: e.clientX, y: e.clientY };
    });
    container?.addEventListener("mousemove", (e) => {
      if (!this.dragging) return;
      this.setTransform(panBy(this.transform, e.clientX - this.dragging.x, e.clientY - this.dragging.y));
      this.dragging = { x: e.clientX, y: e.clientY };
    });
    container?.addEventListener("mouseup", () => {
      this.dragging = null;
    });
    this.setTransform(this.transform);
  }

  get isFallback(): boolean {
    return this.panels.length === 1;
  }

  setTransform(t: Transform): void {
    this.transform = t;
    // one shared transform keeps both panels aligned pixel for pixel
    for (const img of this.panels) {
      img.style.transform = cssTransform(t);
    }
  }
}
