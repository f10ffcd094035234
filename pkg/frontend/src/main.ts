/** Hash-routed shell: #/runs/<id>/review | metrics | compare/<imageId>. */

import { ReviewApi } from "./api.js";
import { CompareView } from "./compare.js";
import { renderMetrics } from "./metrics.js";
import { ReviewScreen } from "./review.js";

const api = new ReviewApi("");
let activeScreen: ReviewScreen | null = null;

function mount(): void {
  const root = document.getElementById("app");
  if (!root) return;
  activeScreen?.stop();
  activeScreen = null;

  const review = window.location.hash.match(/^#\/runs\/([^/]+)\/review$/);
  const metrics = window.location.hash.match(/^#\/runs\/([^/]+)\/metrics$/);
  const compare = window.location.hash.match(/^#\/runs\/([^/]+)\/compare\/([^/]+)$/);

  if (review?.[1]) {
    const runId = review[1];
    activeScreen = new ReviewScreen(api, runId, root, () => mount());
    void activeScreen.start();
  } else if (metrics?.[1]) {
    void renderMetrics(api, metrics[1], root);
  } else if (compare?.[1] && compare[2]) {
    const [runId, imageId] = [compare[1], compare[2]];
    const asaUrl = `/runs/${runId}/images/${imageId}/annotation`;
    const predUrl = `/runs/${runId}/images/${imageId}/overlay`;
    new CompareView(root, asaUrl, predUrl);
  } else {
    root.innerHTML = `
      <h1>stereocount review</h1>
      <p>Open <code>#/runs/&lt;run-id&gt;/review</code> to review predictions,
      <code>#/runs/&lt;run-id&gt;/metrics</code> for iteration metrics.</p>`;
  }
}

window.addEventListener("hashchange", mount);
window.addEventListener("DOMContentLoaded", mount);
