"""HTTP/JSON facade for human reviewers.

One serialized writer per run guards every mutation; verdicts are durable in
the append-only decisions log before they are acknowledged, so replaying the
log after a crash reconstructs the queue exactly.  Training/prediction runs
as a background job fenced by the phase state machine
(idle -> training -> predicting -> awaiting-review -> evaluating -> ...).
"""

from __future__ import annotations

import io
import json
import threading
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from . import SCHEMA_VERSION
from .disector import Annotation
from .loop import (
    LoopConfig,
    RunDir,
    RunState,
    complete_iteration,
    init_run,
    train_and_predict,
)
from .manifest import DatasetManifest
from .overlay import render_overlay
from .raster import load_image, load_mask, to_grayscale
from .segnet import load_checkpoint

DEFAULT_LEASE_SECONDS = 120.0


class CreateRunRequest(BaseModel):
    manifest_path: str
    asa_verdicts_path: str
    config: dict
    run_id: str | None = None


class VerdictRequest(BaseModel):
    image_id: str
    verdict: str
    reviewer: str = "human"


class IterateRequest(BaseModel):
    force: bool = False
    start_next: bool = True


@dataclass
class QueueEntry:
    image_id: str
    status: str = "pending"  # pending | accepted | rejected
    lease_until: float = 0.0


@dataclass
class RunHandle:
    run: RunDir
    state: RunState
    cfg: LoopConfig
    phase: str = "idle"
    queue: dict[str, QueueEntry] = field(default_factory=dict)
    params: object | None = None
    lock: threading.RLock = field(default_factory=threading.RLock)
    job: threading.Thread | None = None
    error: str | None = None

    @property
    def review_iteration(self) -> int:
        return self.state.iteration + 1

    def pending(self) -> list[str]:
        return sorted(i for i, e in self.queue.items() if e.status == "pending")

    def decided_verdicts(self) -> dict[str, str]:
        return {i: e.status for i, e in self.queue.items()
                if e.status in ("accepted", "rejected")}


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"schema_version": SCHEMA_VERSION, "error": message},
                        status_code=status)


def create_app(data_root: str | Path, lease_seconds: float = DEFAULT_LEASE_SECONDS,
               sync_jobs: bool = False) -> FastAPI:
    """App factory; `sync_jobs` runs training inline (tests, CI)."""
    data_root = Path(data_root)
    data_root.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="stereocount review service")
    runs: dict[str, RunHandle] = {}
    registry_lock = threading.Lock()

    # ------------------------------------------------------------ helpers

    def summary(run_id: str, handle: RunHandle) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": run_id,
            "iteration": handle.state.iteration,
            "review_iteration": handle.review_iteration if handle.queue else None,
            "queue_remaining": len(handle.pending()),
            "records": [r.to_dict() for r in handle.state.records],
            "status": handle.phase,
            "error": handle.error,
        }

    def rebuild_queue(handle: RunHandle) -> None:
        """Reconstruct review state for the in-flight iteration from disk."""
        iteration = handle.review_iteration
        pred_dir = handle.run.pred_dir(iteration)
        if not pred_dir.exists():
            handle.queue = {}
            return
        queue = {p.stem: QueueEntry(p.stem) for p in sorted(pred_dir.glob("*.png"))}
        for d in handle.run.read_decisions():
            if d.get("type") == "verdict" and d.get("iteration") == iteration:
                if d["image_id"] in queue:
                    queue[d["image_id"]].status = d["verdict"] + "ed"
        handle.queue = queue
        handle.phase = "awaiting-review"
        ckpt = handle.run.checkpoint_path(iteration)
        if ckpt.exists():
            handle.params = load_checkpoint(ckpt)

    def load_handle(run_id: str) -> RunHandle | None:
        with registry_lock:
            if run_id in runs:
                return runs[run_id]
        root = data_root / run_id
        if not (root / "state.json").exists():
            return None
        run = RunDir(root)
        state, cfg = run.load_state()
        handle = RunHandle(run=run, state=state, cfg=cfg)
        rebuild_queue(handle)
        if not handle.queue:
            handle.phase = "idle"
        with registry_lock:
            runs.setdefault(run_id, handle)
            return runs[run_id]

    def start_iteration_job(run_id: str, handle: RunHandle) -> None:
        def job():
            try:
                handle.phase = "training"
                params, predictions = train_and_predict(handle.state, handle.run,
                                                        handle.cfg)
                handle.phase = "predicting"
                handle.params = params
                handle.queue = {i: QueueEntry(i) for i in sorted(predictions)}
                handle.phase = "awaiting-review"
            except Exception:  # surfaced through the summary, not lost
                handle.error = traceback.format_exc(limit=3)
                handle.phase = "failed"

        if sync_jobs:
            job()
        else:
            handle.job = threading.Thread(target=job, daemon=True)
            handle.job.start()

    # ------------------------------------------------------------ endpoints

    @app.post("/runs", status_code=201)
    def create_run(req: CreateRunRequest):
        run_id = req.run_id or f"run-{int(time.time())}"
        if (data_root / run_id).exists():
            return _error(409, f"run {run_id} already exists")
        try:
            manifest = DatasetManifest.load(req.manifest_path)
        except FileNotFoundError:
            return _error(400, f"manifest not found: {req.manifest_path}")
        except (ValueError, KeyError) as exc:
            return _error(400, f"invalid manifest: {exc}")
        try:
            verdicts = json.loads(Path(req.asa_verdicts_path).read_text())
            cfg = LoopConfig(**req.config)
            state = init_run(manifest, verdicts, cfg.test_mouse_id)
        except FileNotFoundError as exc:
            return _error(400, str(exc))
        except (ValueError, TypeError) as exc:
            return _error(400, str(exc))
        run = RunDir(data_root / run_id)
        run.create(state, cfg, verdicts)
        handle = RunHandle(run=run, state=state, cfg=cfg)
        with registry_lock:
            runs[run_id] = handle
        return {"schema_version": SCHEMA_VERSION, "run_id": run_id}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        handle = load_handle(run_id)
        if handle is None:
            return _error(404, f"unknown run {run_id}")
        with handle.lock:
            return summary(run_id, handle)

    @app.get("/runs/{run_id}/queue/next")
    def next_item(run_id: str):
        handle = load_handle(run_id)
        if handle is None:
            return _error(404, f"unknown run {run_id}")
        with handle.lock:
            if handle.phase != "awaiting-review":
                return _error(409, f"run is {handle.phase}, not awaiting-review")
            now = time.monotonic()
            for image_id in handle.pending():
                entry = handle.queue[image_id]
                if entry.lease_until > now:
                    continue
                entry.lease_until = now + lease_seconds
                return {
                    "schema_version": SCHEMA_VERSION,
                    "image_id": image_id,
                    "iteration": handle.review_iteration,
                    "status": entry.status,
                    "edf_url": f"/runs/{run_id}/images/{image_id}/edf",
                    "mask_url": f"/runs/{run_id}/images/{image_id}/mask",
                    "overlay_url": f"/runs/{run_id}/images/{image_id}/overlay",
                    "annotation_url": f"/runs/{run_id}/images/{image_id}/annotation",
                }
            return Response(status_code=204)

    @app.post("/runs/{run_id}/review")
    def submit_verdict(run_id: str, req: VerdictRequest):
        handle = load_handle(run_id)
        if handle is None:
            return _error(404, f"unknown run {run_id}")
        if req.verdict not in ("accept", "reject"):
            return _error(400, f"verdict must be accept or reject, got {req.verdict!r}")
        with handle.lock:
            if handle.phase != "awaiting-review":
                return _error(409, f"run is {handle.phase}, not awaiting-review")
            entry = handle.queue.get(req.image_id)
            if entry is None:
                return _error(404, f"{req.image_id} is not in the review queue")
            if entry.status != "pending":
                if entry.status == req.verdict + "ed":
                    return {"schema_version": SCHEMA_VERSION, "status": entry.status,
                            "idempotent": True}
                return _error(409, f"{req.image_id} already {entry.status}")
            # durable before acknowledged
            handle.run.append_decision({
                "type": "verdict", "iteration": handle.review_iteration,
                "image_id": req.image_id, "verdict": req.verdict,
                "reviewer": req.reviewer,
                "ts": time.strftime("%Y-%m-%dT%H:%M:%S+00:00", time.gmtime()),
            })
            entry.status = req.verdict + "ed"
            return {"schema_version": SCHEMA_VERSION, "status": entry.status,
                    "remaining": len(handle.pending())}

    @app.post("/runs/{run_id}/iterate")
    def advance(run_id: str, req: IterateRequest | None = None):
        req = req or IterateRequest()
        handle = load_handle(run_id)
        if handle is None:
            return _error(404, f"unknown run {run_id}")
        with handle.lock:
            if handle.phase in ("training", "predicting", "evaluating"):
                return _error(409, f"run is busy ({handle.phase})")
            if handle.phase == "awaiting-review":
                pending = handle.pending()
                if pending and not req.force:
                    return _error(409, "pending items: " + ", ".join(pending[:10]))
                verdicts = {i: ("accept" if s == "accepted" else "reject")
                            for i, s in handle.decided_verdicts().items()}
                handle.phase = "evaluating"
                try:
                    complete_iteration(handle.state, handle.run, handle.cfg,
                                       handle.params, verdicts)
                except Exception as exc:
                    handle.error = str(exc)
                    handle.phase = "failed"
                    return _error(500, str(exc))
                handle.queue = {}
                handle.phase = "idle"
            if req.start_next and handle.state.partition.active:
                start_iteration_job(run_id, handle)
            return summary(run_id, handle)

    @app.get("/runs/{run_id}/metrics")
    def metrics(run_id: str):
        handle = load_handle(run_id)
        if handle is None:
            return _error(404, f"unknown run {run_id}")
        with handle.lock:
            sections = [
                {"iteration": d["iteration"], "rows": d["sections"]}
                for d in handle.run.read_decisions()
                if d.get("type") == "evaluation" and d.get("sections")
            ]
            return {
                "schema_version": SCHEMA_VERSION,
                "records": [r.to_dict() for r in handle.state.records],
                "sections": sections,
            }

    @app.get("/runs/{run_id}/images/{image_id}/{kind}")
    def serve_artifact(run_id: str, image_id: str, kind: str):
        handle = load_handle(run_id)
        if handle is None:
            return _error(404, f"unknown run {run_id}")
        try:
            item = handle.state.manifest.item(image_id)
        except KeyError:
            return _error(404, f"unknown image {image_id}")
        manifest = handle.state.manifest
        mask_path = handle.run.pred_dir(handle.review_iteration) / f"{image_id}.png"
        if kind == "edf":
            return _png_bytes(manifest.resolve(item.edf_path))
        if kind == "mask":
            if not mask_path.exists():
                return _error(404, f"no predicted mask for {image_id}")
            return _png_bytes(mask_path)  # exact stored {0, 255} file
        if kind in ("overlay", "annotation"):
            ann = Annotation.load(manifest.resolve(item.annotation_path))
            edf = to_grayscale(load_image(manifest.resolve(item.edf_path)))
            mask = None
            if kind == "overlay" and mask_path.exists():
                mask = load_mask(mask_path)
            rgb = render_overlay(edf, ann.frame, mask=mask, dots=ann.dots)
            buf = io.BytesIO()
            data = np.floor(rgb * 255.0 + 0.5).astype(np.uint8)
            from PIL import Image as PILImage

            PILImage.fromarray(data, mode="RGB").save(buf, format="PNG")
            return Response(buf.getvalue(), media_type="image/png")
        return _error(404, f"unknown artifact kind {kind!r}")

    return app


def _png_bytes(path: Path) -> Response:
    if not Path(path).exists():
        return _error(404, f"missing artifact {path}")
    return Response(Path(path).read_bytes(), media_type="image/png")
