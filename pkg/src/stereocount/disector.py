"""Unbiased counting-frame geometry, blob classification and error metrics.

The frame's top and right edges are inclusion lines, bottom and left are
exclusion lines.  A blob touching any exclusion line is never counted, no
matter what else it touches; "touching" means a blob pixel lies on the
1-pixel edge line or within 8-adjacency of it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .labels import Blob, blobs_from_labels
from .raster import Rect
from .validation import check_labels


class Verdict(Enum):
    COUNTED = "counted"
    EXCLUDED = "excluded"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class DisectorFrame:
    rect: Rect
    thickness: int = 1

    def __post_init__(self):
        if self.thickness < 1:
            raise ValueError("line thickness must be >= 1")
        if self.rect.width <= 2 * self.thickness or self.rect.height <= 2 * self.thickness:
            raise ValueError(f"frame {self.rect} too small for line thickness {self.thickness}")

    # Edge bands partition the border: corners on an exclusion line belong to
    # it (top-left, bottom-left -> left; bottom-right -> bottom; top-right -> right).
    def edge_bands(self) -> dict[str, Rect]:
        r, t = self.rect, self.thickness
        return {
            "left": Rect(r.x0, r.y0, r.x0 + t, r.y1),
            "bottom": Rect(r.x0 + t, r.y1 - t, r.x1, r.y1),
            "right": Rect(r.x1 - t, r.y0, r.x1, r.y1 - t),
            "top": Rect(r.x0 + t, r.y0, r.x1 - t, r.y0 + t),
        }

    def interior(self) -> Rect:
        r, t = self.rect, self.thickness
        return Rect(r.x0 + t, r.y0 + t, r.x1 - t, r.y1 - t)

    def to_dict(self) -> dict:
        return self.rect.to_dict()

    @staticmethod
    def from_dict(d: dict) -> "DisectorFrame":
        return DisectorFrame(Rect.from_dict(d))


@dataclass
class Annotation:
    """Manual dot marks for counted cells, tied to a frame and image."""

    image_id: str
    frame: DisectorFrame
    dots: list[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "frame": self.frame.to_dict(),
            "dots": [[int(x), int(y)] for x, y in self.dots],
        }

    @staticmethod
    def from_dict(d: dict) -> "Annotation":
        return Annotation(
            image_id=str(d["image_id"]),
            frame=DisectorFrame.from_dict(d["frame"]),
            dots=[(int(x), int(y)) for x, y in d["dots"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @staticmethod
    def load(path: str | Path) -> "Annotation":
        return Annotation.from_dict(json.loads(Path(path).read_text()))


@dataclass
class CountResult:
    verdicts: dict[int, Verdict]

    @property
    def counted(self) -> int:
        return sum(1 for v in self.verdicts.values() if v is Verdict.COUNTED)


@dataclass
class MatchReport:
    matched: list[tuple[int, int]] = field(default_factory=list)
    unmatched_blobs: list[int] = field(default_factory=list)
    unmatched_dots: list[int] = field(default_factory=list)

    @property
    def accept(self) -> bool:
        return not self.unmatched_blobs and not self.unmatched_dots


def _in_band(xs, ys, band: Rect, grow: int) -> np.ndarray:
    return (
        (xs >= band.x0 - grow)
        & (xs < band.x1 + grow)
        & (ys >= band.y0 - grow)
        & (ys < band.y1 + grow)
    )


def classify_blob(blob: Blob, frame: DisectorFrame) -> Verdict:
    """Counting-rule verdict for one blob; exclusion beats inclusion."""
    xs, ys = blob.xs, blob.ys
    bands = frame.edge_bands()
    touches_exclusion = (
        _in_band(xs, ys, bands["left"], 1).any()
        or _in_band(xs, ys, bands["bottom"], 1).any()
    )
    if touches_exclusion:
        return Verdict.EXCLUDED
    inner = frame.interior()
    inside = _in_band(xs, ys, inner, 0).any()
    touches_inclusion = (
        _in_band(xs, ys, bands["top"], 1).any()
        or _in_band(xs, ys, bands["right"], 1).any()
    )
    if inside or touches_inclusion:
        return Verdict.COUNTED
    return Verdict.OUTSIDE


def count_cells(labels: np.ndarray, frame: DisectorFrame) -> CountResult:
    labels = check_labels(labels)
    verdicts = {b.label: classify_blob(b, frame) for b in blobs_from_labels(labels)}
    return CountResult(verdicts)


def match_annotation(labels: np.ndarray, ann: Annotation) -> MatchReport:
    """Pair counted blobs with annotation dots; exclusion-line blobs are ignored.

    Accepts only a perfect one-to-one pairing: every counted blob holds
    exactly one dot and every dot falls in exactly one counted blob.
    """
    labels = check_labels(labels)
    result = count_cells(labels, ann.frame)
    counted = {lab for lab, v in result.verdicts.items() if v is Verdict.COUNTED}
    h, w = labels.shape

    dots_by_label: dict[int, list[int]] = {}
    report = MatchReport()
    for i, (x, y) in enumerate(ann.dots):
        lab = int(labels[y, x]) if 0 <= x < w and 0 <= y < h else 0
        if lab in counted:
            dots_by_label.setdefault(lab, []).append(i)
        else:
            report.unmatched_dots.append(i)

    for lab in sorted(counted):
        hits = dots_by_label.get(lab, [])
        if len(hits) == 1:
            report.matched.append((lab, hits[0]))
        else:
            report.unmatched_blobs.append(lab)
            report.unmatched_dots.extend(hits)
    report.unmatched_dots.sort()
    return report


def error_rate(y_true: int, y_pred: int) -> float:
    """Absolute percent count error relative to the ground truth count."""
    if y_true <= 0:
        raise ValueError("error rate undefined for y_true <= 0")
    return abs(y_true - y_pred) / y_true * 100.0


def aggregate_error_rate(pairs: list[tuple[int, int]]) -> float:
    """Error rate of summed counts (not the mean of per-pair rates)."""
    total_true = sum(t for t, _ in pairs)
    total_pred = sum(p for _, p in pairs)
    if total_true <= 0:
        raise ValueError("aggregate error rate undefined for zero total ground truth")
    return error_rate(total_true, total_pred)


def write_count_report(path: str | Path, rows: list[dict]) -> None:
    """Write per-section counts as CSV or JSON depending on the suffix."""
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(rows, indent=1) + "\n")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["section", "manual", "predicted", "error_pct"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
