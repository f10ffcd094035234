"""Iterative human-in-the-loop protocol.

Each iteration trains the segmenter from scratch on the current training
set (every pair expanded 72-fold by augmentation and cropped around the
counting frame), predicts masks for the whole active set, collects one
accept/reject verdict per image, folds the accepted pairs into the training
set, and scores the held-out test mouse through the counting rules.

All state changes are journaled to an append-only decisions log, so a run
can be replayed or resumed to byte-identical records.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import SCHEMA_VERSION
from .asa import separate_touching
from .augment import augment_pair, crop_to_frame
from .disector import Annotation, aggregate_error_rate, count_cells
from .labels import size_filter
from .manifest import DatasetManifest, ManifestItem, Partition
from .raster import load_image, load_mask, save_mask, to_grayscale
from .segnet import TrainConfig, load_checkpoint, predict_mask, save_checkpoint, train
from .synth import item_seed

AUGMENT_FACTOR = 72


@dataclass
class LoopConfig:
    test_mouse_id: str
    iterations: int = 5
    epochs: int = 100
    lr: float = 1e-4
    batch_size: int = 4
    depth: int = 3
    base_channels: int = 8
    seed: int = 0
    margin: int = 20
    min_cell_size: int = 30
    max_cell_size: int = 5000
    threshold: float = 0.5
    dtype: str = "float32"

    def train_config(self, iteration: int) -> TrainConfig:
        # fresh seeded initialization per iteration, offset so iterations differ
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, batch_size=self.batch_size,
            seed=self.seed + 1000 * iteration, depth=self.depth,
            base_channels=self.base_channels, dtype=self.dtype,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(
            {"schema": SCHEMA_VERSION, **asdict(self)}, indent=1) + "\n")

    @staticmethod
    def load(path: str | Path) -> "LoopConfig":
        data = json.loads(Path(path).read_text())
        data.pop("schema", None)
        return LoopConfig(**data)


@dataclass
class IterationRecord:
    iteration: int
    n_accepted: int
    error_pct: float
    train_size: int  # augmented units after this iteration's acceptances

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunState:
    manifest: DatasetManifest
    partition: Partition
    test_mouse_id: str
    iteration: int = 0
    records: list[IterationRecord] = field(default_factory=list)
    mask_paths: dict[str, str] = field(default_factory=dict)

    def check_invariants(self) -> None:
        self.partition.validate(self.manifest, self.test_mouse_id)
        test_ids = set(self.partition.test)
        assert not (set(self.partition.train) & test_ids), "test leaked into train"

    @property
    def train_size_augmented(self) -> int:
        return AUGMENT_FACTOR * len(self.partition.train)


def init_run(manifest: DatasetManifest, asa_verdicts: dict[str, str],
             test_mouse_id: str) -> RunState:
    """Partition the corpus from the initial mask verdicts.

    Accepted items seed the training set (with their existing masks),
    rejected ones form the active set; the designated mouse is quarantined
    as the test set regardless of any verdict it carries.
    """
    if not any(m.mouse_id == test_mouse_id for m in manifest.mice):
        raise ValueError(f"unknown test mouse {test_mouse_id}")
    train, active, test = [], [], []
    for item in manifest.items:
        if item.mouse_id == test_mouse_id:
            test.append(item.image_id)
            continue
        verdict = asa_verdicts.get(item.image_id)
        if verdict is None:
            raise ValueError(f"missing initial verdict for {item.image_id}")
        if verdict not in ("accept", "reject"):
            raise ValueError(f"bad verdict {verdict!r} for {item.image_id}")
        (train if verdict == "accept" else active).append(item.image_id)
    state = RunState(manifest, Partition(sorted(train), sorted(active), sorted(test)),
                     test_mouse_id)
    state.mask_paths = {
        image_id: manifest.item(image_id).asa_mask_path
        for image_id in state.partition.train
        if manifest.item(image_id).asa_mask_path
    }
    state.check_invariants()
    return state


class RunDir:
    """Layout and durability of one run's on-disk state."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def decisions_path(self) -> Path:
        return self.root / "decisions.jsonl"

    def create(self, state: RunState, cfg: LoopConfig,
               asa_verdicts: dict[str, str] | None = None) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "checkpoints").mkdir(exist_ok=True)
        state.manifest.save(self.root / "manifest.json")
        if state.manifest.root is not None:
            (self.root / "data_root.txt").write_text(
                str(Path(state.manifest.root).resolve()) + "\n")
        cfg.save(self.root / "config.json")
        if asa_verdicts:
            for image_id in sorted(asa_verdicts):
                self.append_decision({"type": "asa_verdict", "image_id": image_id,
                                      "verdict": asa_verdicts[image_id]})
        self.save_state(state)

    def append_decision(self, record: dict) -> None:
        record = {"schema": SCHEMA_VERSION, **record}
        with open(self.decisions_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read_decisions(self) -> list[dict]:
        if not self.decisions_path.exists():
            return []
        return [json.loads(line) for line in
                self.decisions_path.read_text().splitlines() if line.strip()]

    def save_state(self, state: RunState) -> None:
        state.partition.save(self.root / "partition.json")
        payload = {
            "schema": SCHEMA_VERSION,
            "test_mouse_id": state.test_mouse_id,
            "iteration": state.iteration,
            "records": [r.to_dict() for r in state.records],
            "mask_paths": state.mask_paths,
        }
        (self.root / "state.json").write_text(json.dumps(payload, indent=1) + "\n")
        write_records_csv(self.root / "records.csv", state.records)

    def load_state(self) -> tuple[RunState, LoopConfig]:
        manifest = DatasetManifest.load(self.root / "manifest.json")
        data_root = self.root / "data_root.txt"
        if data_root.exists():
            manifest.root = Path(data_root.read_text().strip())
        cfg = LoopConfig.load(self.root / "config.json")
        partition = Partition.load(self.root / "partition.json")
        data = json.loads((self.root / "state.json").read_text())
        state = RunState(
            manifest, partition, data["test_mouse_id"], data["iteration"],
            [IterationRecord(**r) for r in data["records"]],
            dict(data["mask_paths"]),
        )
        state.check_invariants()
        return state, cfg

    def checkpoint_path(self, iteration: int) -> Path:
        return self.root / "checkpoints" / f"iter_{iteration:02d}.bin"

    def pred_dir(self, iteration: int) -> Path:
        return self.root / "pred" / f"iter_{iteration:02d}"


def write_records_csv(path: str | Path, records: list[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "n_accepted", "error_pct"])
        for r in records:
            writer.writerow([r.iteration, r.n_accepted, f"{r.error_pct:.2f}"])


def _load_pair(state: RunState, run: RunDir, image_id: str):
    item = state.manifest.item(image_id)
    edf = to_grayscale(load_image(state.manifest.resolve(item.edf_path)))
    mask_rel = state.mask_paths[image_id]
    mask_path = state.manifest.resolve(mask_rel)
    if not mask_path.exists():
        mask_path = run.root / mask_rel
    mask = load_mask(mask_path)
    ann = Annotation.load(state.manifest.resolve(item.annotation_path))
    return edf, mask, ann


def build_training_set(state: RunState, run: RunDir, cfg: LoopConfig):
    """All current train pairs, 72-way augmented then cropped to frame+margin.

    Augmentation fields are derived from stable per-image seeds, so the
    expanded set is identical every time an image is used.
    """
    pairs = []
    for image_id in sorted(state.partition.train):
        edf, mask, ann = _load_pair(state, run, image_id)
        for aug in augment_pair(edf, mask, seed=item_seed(cfg.seed, image_id)):
            img_c, _ = crop_to_frame(aug.image, ann.frame, cfg.margin)
            mask_c, _ = crop_to_frame(aug.mask, ann.frame, cfg.margin)
            pairs.append((img_c, mask_c))
    return pairs


def postprocess_prediction(mask: np.ndarray, cfg: LoopConfig) -> np.ndarray:
    """Test-time chain: split touching cells, then drop out-of-range sizes."""
    labels = separate_touching(mask, cfg.min_cell_size)
    return size_filter(labels, cfg.min_cell_size, cfg.max_cell_size)


def evaluate_test(params, state: RunState, cfg: LoopConfig):
    """Per-section (manual, predicted) counts for the test mouse plus the
    aggregate percent error."""
    by_section: dict[int, list[ManifestItem]] = {}
    for image_id in state.partition.test:
        item = state.manifest.item(image_id)
        by_section.setdefault(item.section, []).append(item)
    rows = []
    for section in sorted(by_section):
        manual = predicted = 0
        for item in by_section[section]:
            ann_path = state.manifest.resolve(item.annotation_path)
            if not ann_path.exists():
                raise FileNotFoundError(f"missing annotation for {item.image_id}")
            ann = Annotation.load(ann_path)
            manual += len(ann.dots)
            edf = to_grayscale(load_image(state.manifest.resolve(item.edf_path)))
            pred = predict_mask(params, edf, cfg.threshold)
            labels = postprocess_prediction(pred, cfg)
            predicted += count_cells(labels, ann.frame).counted
        rows.append({"section": section, "manual": manual, "predicted": predicted})
    aggregate = aggregate_error_rate([(r["manual"], r["predicted"]) for r in rows])
    return rows, aggregate


def train_and_predict(state: RunState, run: RunDir, cfg: LoopConfig):
    """First half of an iteration: fresh training plus active-set predictions."""
    iteration = state.iteration + 1
    pairs = build_training_set(state, run, cfg)
    if not pairs:
        raise ValueError("training set is empty")
    params, _curve = train(pairs, cfg.train_config(iteration))
    save_checkpoint(run.checkpoint_path(iteration), params)

    pred_dir = run.pred_dir(iteration)
    pred_dir.mkdir(parents=True, exist_ok=True)
    predictions: dict[str, Path] = {}
    for image_id in sorted(state.partition.active):
        item = state.manifest.item(image_id)
        edf = to_grayscale(load_image(state.manifest.resolve(item.edf_path)))
        mask = predict_mask(params, edf, cfg.threshold)
        path = pred_dir / f"{image_id}.png"
        save_mask(path, mask)
        predictions[image_id] = path
    return params, predictions


def complete_iteration(state: RunState, run: RunDir, cfg: LoopConfig,
                       params, verdicts: dict[str, str]) -> IterationRecord:
    """Second half: fold in verdicts, evaluate the test mouse, record."""
    iteration = state.iteration + 1
    active = set(state.partition.active)
    unknown = set(verdicts) - active
    if unknown:
        raise ValueError(f"verdicts for non-active images: {sorted(unknown)}")

    accepted = sorted(i for i, v in verdicts.items() if v == "accept")
    pred_rel = {i: (run.pred_dir(iteration) / f"{i}.png").relative_to(run.root)
                for i in accepted}
    before_active = len(state.partition.active)
    for image_id in accepted:
        state.partition.active.remove(image_id)
        state.partition.train.append(image_id)
        state.mask_paths[image_id] = str(pred_rel[image_id])
    state.partition.train.sort()
    assert len(state.partition.active) == before_active - len(accepted)

    rows, aggregate = evaluate_test(params, state, cfg)
    run.append_decision({
        "type": "evaluation", "iteration": iteration,
        "error_pct": round(aggregate, 4), "sections": rows,
    })
    record = IterationRecord(iteration, len(accepted), aggregate,
                             state.train_size_augmented)
    state.records.append(record)
    state.iteration = iteration
    state.check_invariants()
    run.save_state(state)
    return record


def run_iteration(state: RunState, run: RunDir, cfg: LoopConfig,
                  reviewer) -> IterationRecord:
    """One full protocol iteration with a synchronous reviewer callback."""
    iteration = state.iteration + 1
    params, predictions = train_and_predict(state, run, cfg)
    verdicts: dict[str, str] = {}
    for image_id in sorted(predictions):
        mask = load_mask(predictions[image_id])
        verdict = reviewer(image_id, mask, state.manifest.item(image_id))
        if verdict not in ("accept", "reject"):
            raise ValueError(f"reviewer returned {verdict!r} for {image_id}")
        verdicts[image_id] = verdict
        run.append_decision({
            "type": "verdict", "iteration": iteration, "image_id": image_id,
            "verdict": verdict, "reviewer": getattr(reviewer, "name", "callable"),
            "ts": datetime.now(timezone.utc).isoformat(),
        })
    return complete_iteration(state, run, cfg, params, verdicts)


def run_loop(state: RunState, run: RunDir, cfg: LoopConfig, reviewer,
             n_iterations: int | None = None) -> list[IterationRecord]:
    """Run n sequential iterations, checkpointing state after each."""
    n = cfg.iterations if n_iterations is None else n_iterations
    if n < 1:
        raise ValueError("need at least one iteration")
    for _ in range(n):
        run_iteration(state, run, cfg, reviewer)
    return state.records


def resume_loop(run_dir: str | Path, reviewer,
                n_total: int | None = None) -> list[IterationRecord]:
    """Pick up a killed run from its last completed iteration."""
    run = RunDir(run_dir)
    state, cfg = run.load_state()
    target = cfg.iterations if n_total is None else n_total
    while state.iteration < target:
        run_iteration(state, run, cfg, reviewer)
    return state.records


class OracleReviewer:
    """Scripted reviewer applying the mechanized annotation-match rule."""

    name = "oracle"

    def __init__(self, manifest: DatasetManifest, min_cell_size: int = 30):
        self.manifest = manifest
        self.min_cell_size = min_cell_size

    def __call__(self, image_id: str, pred_mask: np.ndarray,
                 item: ManifestItem) -> str:
        from .synth import oracle_reviewer

        ann = Annotation.load(self.manifest.resolve(item.annotation_path))
        ok = oracle_reviewer(pred_mask, ann, min_cell_size=self.min_cell_size)
        return "accept" if ok else "reject"


def replay_decisions(manifest: DatasetManifest, decisions: list[dict] | str | Path,
                     test_mouse_id: str) -> tuple[list[IterationRecord], RunState]:
    """Re-run the loop bookkeeping from a recorded decision log.

    No training or prediction happens; verdicts and evaluation results come
    from the log.  Partition invariants are enforced at every step, and when
    an evaluation carries per-section counts the recorded error must agree
    with the aggregate recomputation.
    """
    if not isinstance(decisions, list):
        decisions = [json.loads(line) for line in
                     Path(decisions).read_text().splitlines() if line.strip()]
    asa_verdicts = {d["image_id"]: d["verdict"] for d in decisions
                    if d["type"] == "asa_verdict"}
    state = init_run(manifest, asa_verdicts, test_mouse_id)

    by_iteration: dict[int, dict] = {}
    for d in decisions:
        if d["type"] == "verdict":
            by_iteration.setdefault(d["iteration"], {"verdicts": {}, "eval": None})
            entry = by_iteration[d["iteration"]]
            if d["image_id"] in entry["verdicts"]:
                raise ValueError(
                    f"duplicate verdict for {d['image_id']} in iteration {d['iteration']}")
            entry["verdicts"][d["image_id"]] = d["verdict"]
        elif d["type"] == "evaluation":
            by_iteration.setdefault(d["iteration"], {"verdicts": {}, "eval": None})
            by_iteration[d["iteration"]]["eval"] = d

    for iteration in sorted(by_iteration):
        if iteration != state.iteration + 1:
            raise ValueError(f"decision log skips to iteration {iteration}")
        entry = by_iteration[iteration]
        active = set(state.partition.active)
        unknown = set(entry["verdicts"]) - active
        if unknown:
            raise ValueError(f"iteration {iteration} reviews non-active images "
                             f"{sorted(unknown)[:4]}")
        accepted = sorted(i for i, v in entry["verdicts"].items() if v == "accept")
        for image_id in accepted:
            state.partition.active.remove(image_id)
            state.partition.train.append(image_id)
        state.partition.train.sort()

        ev = entry["eval"]
        if ev is None:
            raise ValueError(f"iteration {iteration} has no evaluation record")
        error_pct = float(ev["error_pct"])
        if ev.get("sections"):
            recomputed = aggregate_error_rate(
                [(r["manual"], r["predicted"]) for r in ev["sections"]])
            if abs(recomputed - error_pct) > 5e-3:
                raise ValueError(
                    f"iteration {iteration}: recorded error {error_pct} disagrees "
                    f"with section counts ({recomputed:.4f})")
            error_pct = recomputed
        state.records.append(IterationRecord(
            iteration, len(accepted), error_pct, state.train_size_augmented))
        state.iteration = iteration
        state.check_invariants()
    return state.records, state
