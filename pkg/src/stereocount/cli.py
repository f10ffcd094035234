"""Batch command-line entry points.

Exit codes: 0 success, 1 domain error, 2 usage error.  Every command that
writes outputs also records a reproducibility header (seed, version, hash of
the effective parameters) beside them; all stochastic commands take --seed.
"""

from __future__ import annotations

import functools
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import SCHEMA_VERSION, __version__
from .asa import AsaParams, run_asa
from .augment import augment_pair, write_augmented_set
from .disector import Annotation, DisectorFrame, count_cells, write_count_report
from .edf import edf_stack
from .labels import labels_to_mask
from .loop import (
    LoopConfig,
    OracleReviewer,
    RunDir,
    init_run,
    replay_decisions,
    run_loop,
    write_records_csv,
)
from .manifest import DatasetManifest, MouseSpec
from .raster import Rect, load_image, load_mask, load_stack_dir, save_image, save_mask
from .refdata import bundled_decisions_path, reference_manifest
from .segnet import TrainConfig, UnetSegmenter, load_checkpoint, train
from .synth import SynthParams, bootstrap_asa_verdicts, degrade_params, gen_dataset


def params_hash(params: dict) -> str:
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_run_header(target: Path, command: str, seed, params: dict) -> None:
    header = {
        "schema": SCHEMA_VERSION,
        "tool": "stereocount",
        "version": __version__,
        "command": command,
        "seed": seed,
        "params_hash": params_hash(params),
        "params": params,
    }
    target = Path(target)
    path = target / "run_header.json" if target.is_dir() else Path(
        str(target) + ".run.json")
    path.write_text(json.dumps(header, indent=1, default=str) + "\n")


def guarded(fn):
    """Map domain failures to exit code 1 (usage errors stay click's 2)."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.Abort):
            raise
        except Exception as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def cli():
    """Stereology workbench: segmentation, counting and the review loop."""


# ------------------------------------------------------------------ synth

@cli.group()
def synth():
    """Synthetic corpus generation."""


@synth.command("gen")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="overrides the config seed")
@guarded
def synth_gen(config_path, out_dir, seed):
    """Generate stacks, EDF images, annotations and a manifest."""
    config = json.loads(Path(config_path).read_text())
    mice = [MouseSpec(str(m["mouse_id"]), int(m["sections"]), int(m["stacks"]))
            for m in config["mice"]]
    raw = dict(config.get("params", {}))
    if "frame" in raw:
        raw["frame"] = Rect.from_dict(raw["frame"])
    if "cell_count" in raw:
        raw["cell_count"] = tuple(raw["cell_count"])
    if "radius" in raw:
        raw["radius"] = tuple(raw["radius"])
    params = SynthParams(**raw)
    effective_seed = config.get("seed", 0) if seed is None else seed
    manifest = gen_dataset(mice, params, out_dir, seed=effective_seed)
    write_run_header(Path(out_dir), "synth gen", effective_seed, config)
    click.echo(f"wrote {manifest.total_stacks} items to {out_dir}")


@synth.command("bootstrap")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--test-mouse", required=True)
@click.option("--severity", type=float, default=1.0)
@click.option("--degrade-fraction", type=float, default=0.8)
@click.option("--min-cell-size", type=int, default=30)
@click.option("--max-cell-size", type=int, default=5000)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@guarded
def synth_bootstrap(corpus_dir, test_mouse, severity, degrade_fraction,
                    min_cell_size, max_cell_size, seed, out_path):
    """Run the adaptive pipeline (partly degraded) to seed initial verdicts."""
    manifest = DatasetManifest.load(Path(corpus_dir) / "manifest.json")
    asa = AsaParams(min_cell_size=min_cell_size, max_cell_size=max_cell_size)
    verdicts = bootstrap_asa_verdicts(
        manifest, test_mouse, asa, degrade_params(asa, severity),
        degrade_fraction=degrade_fraction, seed=seed, min_cell_size=min_cell_size)
    Path(out_path).write_text(json.dumps(verdicts, indent=1, sort_keys=True) + "\n")
    write_run_header(Path(out_path), "synth bootstrap", seed, {
        "severity": severity, "degrade_fraction": degrade_fraction,
        "test_mouse": test_mouse})
    accepted = sum(1 for v in verdicts.values() if v == "accept")
    click.echo(f"{accepted} accepted / {len(verdicts) - accepted} rejected")


# ------------------------------------------------------------------ edf

@cli.command("edf")
@click.option("--stack", "stack_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--depth-out", type=click.Path(), default=None)
@click.option("--window", type=int, default=9)
@click.option("--smooth", type=int, default=5)
@guarded
def edf_cmd(stack_dir, out_path, depth_out, window, smooth):
    """Fuse a slice directory (lexicographic order) into one in-focus image."""
    stack = load_stack_dir(stack_dir)
    fused, depth = edf_stack(stack, window=window, smooth=smooth)
    save_image(out_path, fused)
    if depth_out:
        save_image(depth_out, depth.astype(np.float64) / max(len(stack) - 1, 1))
    write_run_header(Path(out_path), "edf", None,
                     {"window": window, "smooth": smooth, "slices": len(stack)})
    click.echo(f"fused {len(stack)} slices -> {out_path}")


# ------------------------------------------------------------------ asa

@cli.group()
def asa():
    """Adaptive segmentation."""


@asa.command("run")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--params", "params_path", type=click.Path(exists=True), default=None)
@click.option("--out", "mask_path", required=True, type=click.Path())
@click.option("--labels", "labels_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=0)
@guarded
def asa_run(in_path, params_path, mask_path, labels_path, seed):
    """Segment one EDF image into a cell mask and label map."""
    params = AsaParams.from_json(params_path) if params_path else AsaParams()
    img = load_image(in_path)
    result = run_asa(img, params, seed=seed)
    save_mask(mask_path, result.mask)
    if labels_path:
        if result.labels.max() > 255:
            raise ValueError("more than 255 cells; label file range exceeded")
        save_image(labels_path, result.labels.astype(np.float64) / 255.0)
    write_run_header(Path(mask_path), "asa run", seed,
                     {**params.__dict__, "input": str(in_path)})
    click.echo(f"{result.labels.max()} cells -> {mask_path}")


# ------------------------------------------------------------------ augment

@cli.command("augment")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True),
              help="directory holding image.png and mask.png")
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@guarded
def augment_cmd(in_dir, seed, out_dir):
    """Expand one pair into the 72 elastic/rotation variants."""
    in_dir = Path(in_dir)
    img = load_image(in_dir / "image.png")
    mask = load_mask(in_dir / "mask.png")
    pairs = augment_pair(img, mask, seed=seed)
    write_augmented_set(out_dir, pairs, seed)
    write_run_header(Path(out_dir), "augment", seed, {"in": str(in_dir)})
    click.echo(f"wrote {len(pairs)} pairs to {out_dir}")


# ------------------------------------------------------------------ train

@cli.command("train")
@click.option("--pairs", "pairs_dir", required=True, type=click.Path(exists=True),
              help="directory of NNN_image.png / NNN_mask.png pairs")
@click.option("--out", "ckpt_path", required=True, type=click.Path())
@click.option("--loss-csv", type=click.Path(), default=None)
@click.option("--epochs", type=int, default=100)
@click.option("--lr", type=float, default=1e-4)
@click.option("--batch-size", type=int, default=4)
@click.option("--depth", type=int, default=3)
@click.option("--base-channels", type=int, default=8)
@click.option("--seed", type=int, required=True)
@guarded
def train_cmd(pairs_dir, ckpt_path, loss_csv, epochs, lr, batch_size, depth,
              base_channels, seed):
    """Train the segmenter on a directory of image/mask pairs."""
    pairs_dir = Path(pairs_dir)
    pairs = []
    for img_path in sorted(pairs_dir.glob("*_image.png")):
        mask_path = img_path.with_name(img_path.name.replace("_image", "_mask"))
        if mask_path.exists():
            pairs.append((load_image(img_path), load_mask(mask_path)))
    if not pairs:
        raise ValueError(f"no *_image.png/*_mask.png pairs in {pairs_dir}")
    cfg = TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size, seed=seed,
                      depth=depth, base_channels=base_channels)
    seg = UnetSegmenter(depth=depth, base_channels=base_channels, epochs=epochs,
                        lr=lr, batch_size=batch_size, seed=seed)
    seg.fit([p[0] for p in pairs], [p[1] for p in pairs])
    digest = seg.save(ckpt_path)
    if loss_csv:
        with open(loss_csv, "w") as fh:
            fh.write("epoch,loss\n")
            for i, value in enumerate(seg.loss_curve_, start=1):
                fh.write(f"{i},{value:.6f}\n")
    write_run_header(Path(ckpt_path), "train", seed, cfg.__dict__)
    click.echo(f"trained on {len(pairs)} pairs -> {ckpt_path} ({digest[:12]})")


# ------------------------------------------------------------------ loop

@cli.group("loop")
def loop_group():
    """Iterative review loop."""


@loop_group.command("run")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--verdicts", "verdicts_path", required=True, type=click.Path(exists=True))
@click.option("--out", "run_dir", required=True, type=click.Path())
@click.option("--test-mouse", required=True)
@click.option("--iterations", type=int, default=5)
@click.option("--reviewer", type=click.Choice(["oracle", "http"]), default="oracle")
@click.option("--port", type=int, default=8642, help="http reviewer port")
@click.option("--epochs", type=int, default=100)
@click.option("--lr", type=float, default=1e-4)
@click.option("--batch-size", type=int, default=4)
@click.option("--depth", type=int, default=3)
@click.option("--base-channels", type=int, default=8)
@click.option("--margin", type=int, default=20)
@click.option("--min-cell-size", type=int, default=30)
@click.option("--max-cell-size", type=int, default=5000)
@click.option("--seed", type=int, required=True)
@click.option("--json", "json_out", is_flag=True)
@guarded
def loop_run(corpus_dir, verdicts_path, run_dir, test_mouse, iterations, reviewer,
             port, epochs, lr, batch_size, depth, base_channels, margin,
             min_cell_size, max_cell_size, seed, json_out):
    """Drive the train/predict/review/evaluate loop."""
    manifest = DatasetManifest.load(Path(corpus_dir) / "manifest.json")
    verdicts = json.loads(Path(verdicts_path).read_text())
    cfg = LoopConfig(test_mouse_id=test_mouse, iterations=iterations,
                     epochs=epochs, lr=lr, batch_size=batch_size, depth=depth,
                     base_channels=base_channels, seed=seed, margin=margin,
                     min_cell_size=min_cell_size, max_cell_size=max_cell_size)
    if reviewer == "http":
        _loop_over_http(manifest, verdicts, run_dir, cfg, port)
        return
    state = init_run(manifest, verdicts, test_mouse)
    run = RunDir(run_dir)
    run.create(state, cfg, verdicts)
    records = run_loop(state, run, cfg,
                       OracleReviewer(manifest, min_cell_size), iterations)
    write_run_header(Path(run_dir), "loop run", seed, cfg.__dict__)
    if json_out:
        click.echo(json.dumps([r.to_dict() for r in records]))
    else:
        for r in records:
            click.echo(f"iteration {r.iteration}: accepted {r.n_accepted}, "
                       f"test error {r.error_pct:.2f}%")


def _loop_over_http(manifest, verdicts, run_dir, cfg, port):
    """Serve the review queue locally and advance whenever it drains."""
    import threading
    import time as _time

    import httpx
    import uvicorn

    from .service import create_app

    run_dir = Path(run_dir)
    app = create_app(run_dir.parent, lease_seconds=DEFAULT_HTTP_LEASE)
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    for _ in range(100):
        try:
            httpx.get(base + "/runs/_probe", timeout=1.0)
            break
        except httpx.TransportError:
            _time.sleep(0.1)
    manifest_path = run_dir.parent / f"{run_dir.name}_manifest.json"
    manifest.save(manifest_path)
    verdicts_path = run_dir.parent / f"{run_dir.name}_verdicts.json"
    verdicts_path.write_text(json.dumps(verdicts))
    resp = httpx.post(base + "/runs", json={
        "manifest_path": str(manifest_path),
        "asa_verdicts_path": str(verdicts_path),
        "config": cfg.__dict__,
        "run_id": run_dir.name,
    }, timeout=None)
    resp.raise_for_status()
    click.echo(f"review at {base}/runs/{run_dir.name} "
               f"(connect the web UI to this service)")
    httpx.post(f"{base}/runs/{run_dir.name}/iterate", json={}, timeout=None)
    done = 0
    while done < cfg.iterations:
        summary = httpx.get(f"{base}/runs/{run_dir.name}", timeout=None).json()
        done = summary["iteration"]
        if summary["status"] == "awaiting-review" and summary["queue_remaining"] == 0:
            httpx.post(f"{base}/runs/{run_dir.name}/iterate",
                       json={"start_next": done + 1 < cfg.iterations}, timeout=None)
        elif summary["status"] == "failed":
            raise RuntimeError(summary.get("error") or "iteration failed")
        _time.sleep(0.5)
    server.should_exit = True


DEFAULT_HTTP_LEASE = 120.0


# ------------------------------------------------------------------ count / eval

def _load_frame(path: Path) -> DisectorFrame:
    data = json.loads(Path(path).read_text())
    if "frame" in data:
        return DisectorFrame.from_dict(data["frame"])
    return DisectorFrame.from_dict(data)


@cli.command("count")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True))
@click.option("--json", "json_out", is_flag=True)
@guarded
def count_cmd(labels_path, frame_path, json_out):
    """Count cells in a label image under the frame's counting rules."""
    img = load_image(labels_path)
    labels = np.rint(np.asarray(img) * 255.0).astype(np.int32)
    frame = _load_frame(frame_path)
    result = count_cells(labels, frame)
    if json_out:
        click.echo(json.dumps({
            "counted": result.counted,
            "verdicts": {str(k): v.value for k, v in result.verdicts.items()},
        }))
    else:
        click.echo(str(result.counted))


@cli.command("eval")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--test-mouse", required=True)
@click.option("--min-cell-size", type=int, default=30)
@click.option("--max-cell-size", type=int, default=5000)
@click.option("--out", "report_path", type=click.Path(), default=None)
@click.option("--json", "json_out", is_flag=True)
@guarded
def eval_cmd(corpus_dir, ckpt_path, test_mouse, min_cell_size, max_cell_size,
             report_path, json_out):
    """Score a checkpoint on a corpus' test mouse under the counting rules."""
    from .loop import evaluate_test
    from .manifest import Partition

    manifest = DatasetManifest.load(Path(corpus_dir) / "manifest.json")
    params = load_checkpoint(ckpt_path)
    cfg = LoopConfig(test_mouse_id=test_mouse, min_cell_size=min_cell_size,
                     max_cell_size=max_cell_size, depth=params.depth,
                     base_channels=params.base_channels)
    from .loop import RunState

    others = [i.image_id for i in manifest.items if i.mouse_id != test_mouse]
    state = RunState(manifest, Partition(
        train=others, active=[],
        test=[i.image_id for i in manifest.mouse_items(test_mouse)]),
        test_mouse_id=test_mouse)
    rows, aggregate = evaluate_test(params, state, cfg)
    for row in rows:
        row["error_pct"] = round(
            abs(row["manual"] - row["predicted"]) / row["manual"] * 100, 2
        ) if row["manual"] else None
    if report_path:
        write_count_report(report_path, rows)
    payload = {"sections": rows, "aggregate_error_pct": round(aggregate, 4)}
    click.echo(json.dumps(payload) if json_out
               else f"aggregate error: {aggregate:.2f}%")


# ------------------------------------------------------------------ replay / serve

@cli.command("replay")
@click.option("--decisions", "decisions_path", type=click.Path(exists=True),
              default=None, help="defaults to the bundled reference log")
@click.option("--records", "expected_path", type=click.Path(exists=True),
              required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              default=None, help="defaults to the bundled reference structure")
@click.option("--test-mouse", default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@guarded
def replay_cmd(decisions_path, expected_path, manifest_path, test_mouse, out_path):
    """Replay a decision log through the bookkeeping and diff the records."""
    from .manifest import REFERENCE_TEST_MOUSE

    manifest = (DatasetManifest.load(manifest_path) if manifest_path
                else reference_manifest())
    mouse = test_mouse or REFERENCE_TEST_MOUSE
    decisions = decisions_path or bundled_decisions_path()
    records, _state = replay_decisions(manifest, decisions, mouse)
    import tempfile

    out = Path(out_path) if out_path else Path(tempfile.mkstemp(".csv")[1])
    write_records_csv(out, records)
    got = out.read_text().replace("\r\n", "\n")
    expected = Path(expected_path).read_text().replace("\r\n", "\n")
    if got != expected:
        click.echo("records mismatch:", err=True)
        click.echo(f"expected:\n{expected}", err=True)
        click.echo(f"got:\n{got}", err=True)
        sys.exit(1)
    click.echo(f"replayed {len(records)} iterations; records match {expected_path}")


@cli.command("serve")
@click.option("--data-root", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8642)
@click.option("--lease-seconds", type=float, default=120.0)
@guarded
def serve_cmd(data_root, host, port, lease_seconds):
    """Serve the review API for the web UI."""
    import uvicorn

    from .service import create_app

    app = create_app(data_root, lease_seconds=lease_seconds)
    uvicorn.run(app, host=host, port=port)


def main():
    cli(prog_name="stereocount")


if __name__ == "__main__":
    main()
