"""Bundled reference run: decision log and expected records.

The reference trace reproduces the published bookkeeping of the real-data
experiment at the metadata level (the images themselves are not available):
966 items across 9 mice, the 147/728/91 initial split, five review rounds
with accepted counts (379, 81, 51, 18, 15) and test errors
(3.16, 0.82, 1.92, 0.41, 0.55) percent, with the final round carrying the
per-section manual/predicted counts whose totals (727 vs 723) reproduce the
0.55 percent aggregate.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .manifest import REFERENCE_MICE, REFERENCE_TEST_MOUSE, DatasetManifest, build_manifest

REFERENCE_ACCEPTS = [379, 81, 51, 18, 15]
REFERENCE_ERRORS = [3.16, 0.82, 1.92, 0.41, 0.55]
INITIAL_TRAIN = 147

TABLE3_MANUAL = [74, 142, 177, 49, 58, 70, 83, 74]
TABLE3_UNET = [82, 137, 160, 48, 59, 64, 92, 81]
TABLE3_ASA = [65, 121, 157, 50, 54, 57, 77, 66]

_TS = "2019-01-01T00:00:00+00:00"  # fixed timestamp keeps the log reproducible


def reference_manifest() -> DatasetManifest:
    return build_manifest(REFERENCE_MICE)


def build_reference_decisions(seed: int = 0) -> list[dict]:
    """Deterministic decision log consistent with the published counts."""
    manifest = reference_manifest()
    rng = np.random.default_rng(seed)
    non_test = [item.image_id for item in manifest.items
                if item.mouse_id != REFERENCE_TEST_MOUSE]
    accepted_initial = set(
        rng.choice(np.array(sorted(non_test)), size=INITIAL_TRAIN, replace=False)
    )
    decisions: list[dict] = []
    for image_id in sorted(non_test):
        decisions.append({"schema": 1, "type": "asa_verdict", "image_id": image_id,
                          "verdict": "accept" if image_id in accepted_initial
                          else "reject"})

    active = sorted(set(non_test) - accepted_initial)
    for iteration, (n_accept, error) in enumerate(
            zip(REFERENCE_ACCEPTS, REFERENCE_ERRORS), start=1):
        chosen = set(rng.choice(np.array(active), size=n_accept, replace=False))
        for image_id in active:
            decisions.append({
                "schema": 1, "type": "verdict", "iteration": iteration,
                "image_id": image_id,
                "verdict": "accept" if image_id in chosen else "reject",
                "reviewer": "reference", "ts": _TS,
            })
        active = sorted(set(active) - chosen)
        evaluation = {"schema": 1, "type": "evaluation", "iteration": iteration,
                      "error_pct": error, "sections": None}
        if iteration == len(REFERENCE_ACCEPTS):
            evaluation["sections"] = [
                {"section": i + 1, "manual": m, "predicted": p}
                for i, (m, p) in enumerate(zip(TABLE3_MANUAL, TABLE3_UNET))
            ]
            evaluation["error_pct"] = round(
                abs(sum(TABLE3_MANUAL) - sum(TABLE3_UNET)) / sum(TABLE3_MANUAL) * 100, 4
            )
        decisions.append(evaluation)
    return decisions


def write_reference_files(out_dir: str | Path, seed: int = 0) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    decisions_path = out_dir / "reference_decisions.jsonl"
    with open(decisions_path, "w") as fh:
        for d in build_reference_decisions(seed):
            fh.write(json.dumps(d, sort_keys=True) + "\n")
    records_path = out_dir / "reference_records.csv"
    with open(records_path, "w", newline="") as fh:
        fh.write("iteration,n_accepted,error_pct\r\n")
        for i, (n, e) in enumerate(zip(REFERENCE_ACCEPTS, REFERENCE_ERRORS), start=1):
            fh.write(f"{i},{n},{e:.2f}\r\n")
    return decisions_path, records_path


def bundled_path(name: str) -> Path:
    return Path(resources.files("stereocount").joinpath("data", name))


def bundled_decisions_path() -> Path:
    return bundled_path("reference_decisions.jsonl")


def bundled_records_path() -> Path:
    return bundled_path("reference_records.csv")
