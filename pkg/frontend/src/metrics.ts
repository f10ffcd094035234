/**
 * Metrics screen: error-rate line chart, accepted-count bars, and the
 * per-section count table with totals.  Charts are dependency-free SVG;
 * the point/bar builders are pure for testability.
 */

import type { ReviewApi } from "./api.js";
import type { IterationRecord, MetricsPayload, SectionRow } from "./types.js";

export interface ChartPoint {
  x: number;
  y: number;
  label: string;
}

const WIDTH = 460;
const HEIGHT = 220;
const PAD = 36;

export function linePoints(records: IterationRecord[]): ChartPoint[] {
  if (records.length === 0) return [];
  const maxErr = Math.max(...records.map((r) => r.error_pct), 1e-9);
  const span = Math.max(records.length - 1, 1);
  return records.map((r, i) => ({
    x: PAD + ((WIDTH - 2 * PAD) * i) / span,
    y: HEIGHT - PAD - ((HEIGHT - 2 * PAD) * r.error_pct) / maxErr,
    label: `${r.error_pct.toFixed(2)}%`,
  }));
}

export function barRects(
  records: IterationRecord[],
): Array<{ x: number; y: number; w: number; h: number; label: string }> {
  if (records.length === 0) return [];
  const maxAcc = Math.max(...records.map((r) => r.n_accepted), 1);
  const slot = (WIDTH - 2 * PAD) / records.length;
  return records.map((r, i) => {
    const h = ((HEIGHT - 2 * PAD) * r.n_accepted) / maxAcc;
    return {
      x: PAD + slot * i + slot * 0.15,
      y: HEIGHT - PAD - h,
      w: slot * 0.7,
      h,
      label: String(r.n_accepted),
    };
  });
}

export function sectionTotals(rows: SectionRow[]): SectionRow {
  return rows.reduce(
    (acc, r) => ({
      section: -1,
      manual: acc.manual + r.manual,
      predicted: acc.predicted + r.predicted,
      asa: r.asa === undefined ? acc.asa : (acc.asa ?? 0) + r.asa,
    }),
    { section: -1, manual: 0, predicted: 0, asa: undefined as number | undefined },
  );
}

function lineChartSvg(records: IterationRecord[]): string {
  const pts = linePoints(records);
  const path = pts.map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(1)},${p.y.toFixed(1)}`).join(" ");
  const dots = pts
    .map(
      (p) => `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3"></circle>
        <text x="${p.x.toFixed(1)}" y="${(p.y - 8).toFixed(1)}" text-anchor="middle">${p.label}</text>`,
    )
    .join("");
  return `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" class="chart" role="img" aria-label="error rate per iteration">
    <path d="${path}" fill="none" stroke="currentColor" stroke-width="2"></path>${dots}
  </svg>`;
}

function barChartSvg(records: IterationRecord[]): string {
  const bars = barRects(records)
    .map(
      (b) => `<rect x="${b.x.toFixed(1)}" y="${b.y.toFixed(1)}" width="${b.w.toFixed(1)}" height="${b.h.toFixed(1)}"></rect>
        <text x="${(b.x + b.w / 2).toFixed(1)}" y="${(b.y - 6).toFixed(1)}" text-anchor="middle">${b.label}</text>`,
    )
    .join("");
  return `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" class="chart" role="img" aria-label="accepted images per iteration">${bars}</svg>`;
}

export function sectionTableHtml(rows: SectionRow[]): string {
  const hasAsa = rows.some((r) => r.asa !== undefined);
  const head = `<tr><th>Section</th><th>Manual</th><th>Predicted</th>${hasAsa ? "<th>ASA</th>" : ""}</tr>`;
  const body = rows
    .map(
      (r) =>
        `<tr><td>${r.section}</td><td>${r.manual}</td><td>${r.predicted}</td>${
          hasAsa ? `<td>${r.asa ?? ""}</td>` : ""
        }</tr>`,
    )
    .join("");
  const t = sectionTotals(rows);
  const totals = `<tr class="totals"><td>Total</td><td>${t.manual}</td><td>${t.predicted}</td>${
    hasAsa ? `<td>${t.asa ?? ""}</td>` : ""
  }</tr>`;
  return `<table class="sections">${head}${body}${totals}</table>`;
}

export async function renderMetrics(
  api: ReviewApi,
  runId: string,
  root: HTMLElement,
): Promise<MetricsPayload> {
  const payload = await api.metrics(runId);
  if (payload.records.length === 0) {
    root.innerHTML = `<p class="empty">No iterations recorded yet.</p>`;
    return payload;
  }
  const latest = payload.sections[payload.sections.length - 1];
  root.innerHTML = `
    <div class="metrics-screen">
      <h2>Error rate on the test mouse (%)</h2>
      ${lineChartSvg(payload.records)}
      <h2>Accepted images per iteration</h2>
      ${barChartSvg(payload.records)}
      ${latest ? `<h2>Per-section counts (iteration ${latest.iteration})</h2>
      ${sectionTableHtml(latest.rows)}` : ""}
    </div>`;
  return payload;
}
