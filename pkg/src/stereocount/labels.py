"""Connected-component labeling, blob properties and size filtering.

Everything is 8-connected; label maps use 0 for background and a contiguous
label set {1..L}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import Rect
from .validation import check_labels, check_mask

STRUCTURE8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Blob:
    """One labeled region: pixel set plus derived geometry."""

    label: int
    ys: np.ndarray
    xs: np.ndarray

    @property
    def area(self) -> int:
        return int(self.ys.size)

    @property
    def centroid(self) -> tuple[float, float]:
        """(x, y) center of mass."""
        return float(self.xs.mean()), float(self.ys.mean())

    @property
    def bbox(self) -> Rect:
        return Rect(int(self.xs.min()), int(self.ys.min()),
                    int(self.xs.max()) + 1, int(self.ys.max()) + 1)


def label_components(mask: np.ndarray) -> np.ndarray:
    mask = check_mask(mask)
    labels, _ = ndimage.label(mask, structure=STRUCTURE8)
    return labels.astype(np.int32)


def labels_to_mask(labels: np.ndarray) -> np.ndarray:
    return (check_labels(labels) > 0).astype(np.uint8)


def region_areas(labels: np.ndarray) -> np.ndarray:
    """Pixel count per label; index 0 is the background."""
    labels = check_labels(labels)
    return np.bincount(labels.ravel(), minlength=int(labels.max()) + 1)


def blobs_from_labels(labels: np.ndarray) -> list[Blob]:
    labels = check_labels(labels)
    out = []
    for lab in range(1, int(labels.max()) + 1):
        ys, xs = np.nonzero(labels == lab)
        if ys.size:
            out.append(Blob(lab, ys, xs))
    return out


def compact_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber surviving labels to {1..L} in ascending original order."""
    labels = check_labels(labels)
    present = np.unique(labels)
    present = present[present > 0]
    lut = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    lut[present] = np.arange(1, present.size + 1, dtype=np.int32)
    return lut[labels]


def size_filter(labels: np.ndarray, min_cell_size: int, max_cell_size: int) -> np.ndarray:
    """Drop regions with area outside [min_cell_size, max_cell_size], inclusive."""
    if not (0 < min_cell_size < max_cell_size):
        raise ValueError(f"need 0 < min < max, got {min_cell_size}, {max_cell_size}")
    labels = check_labels(labels)
    areas = region_areas(labels)
    bad = (areas < min_cell_size) | (areas > max_cell_size)
    bad[0] = False
    out = labels.copy()
    out[bad[labels]] = 0
    return compact_labels(out)
