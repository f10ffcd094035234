"""Adaptive segmentation pipeline for stained cells on EDF images.

The stages: intensity mixture thresholding, binary cleanup, grayscale
reconstruction smoothing, distance-transform marker extraction, watershed
flooding, Voronoi clipping, size filtering and contour smoothing.  The
post-processing primitives (`separate_touching`, size filtering) are reused
on network predictions before counting.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from .contour import smooth_contour, trace_contour
from .gmm import fit_gmm, gmm_threshold
from .labels import blobs_from_labels, compact_labels, labels_to_mask, size_filter
from .morphology import close_, closing_by_reconstruction, open_, opening_by_reconstruction
from .raster import to_grayscale
from .validation import check_image, check_mask
from .watershed import extract_markers, voronoi_clip, voronoi_partition, watershed


@dataclass
class AsaParams:
    """Tunable knobs of the adaptive pipeline (all CLI-exposed)."""

    min_cell_size: int = 30
    max_cell_size: int = 5000
    gmm_threshold: float = 0.5
    n_components: int = 2
    se_radius: int = 2
    smooth_window: int = 7
    smooth_order: int = 2
    dark_foreground: bool = True

    def __post_init__(self):
        if not (0 < self.min_cell_size < self.max_cell_size):
            raise ValueError("need 0 < min_cell_size < max_cell_size")
        if not (0.0 < self.gmm_threshold < 1.0):
            raise ValueError("gmm_threshold must be in (0, 1)")
        if self.smooth_window % 2 == 0 or self.smooth_window <= self.smooth_order:
            raise ValueError("smoothing window must be odd and > order")
        if self.se_radius < 1 or self.n_components < 1:
            raise ValueError("se_radius and n_components must be >= 1")

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1) + "\n")

    @staticmethod
    def from_json(path: str | Path) -> "AsaParams":
        return AsaParams(**json.loads(Path(path).read_text()))


@dataclass
class AsaResult:
    mask: np.ndarray
    labels: np.ndarray
    contours: list[np.ndarray]


def separate_touching(mask: np.ndarray, min_cell_size: int) -> np.ndarray:
    """Split touching cells by watershed on the negated distance transform.

    Flooding is restricted to the mask, so the background stays 0.
    """
    mask = check_mask(mask)
    if mask.max() == 0:
        return np.zeros(mask.shape, dtype=np.int32)
    markers, _ = extract_markers(mask, min_cell_size)
    if markers.max() == 0:
        return np.zeros(mask.shape, dtype=np.int32)
    dist = ndimage.distance_transform_edt(mask)
    return watershed(-dist, markers, domain=mask > 0)


def run_asa(edf_img: np.ndarray, params: AsaParams | None = None, seed: int = 0) -> AsaResult:
    """Full adaptive segmentation of one EDF image, deterministic given seed."""
    params = params or AsaParams()
    img = check_image(edf_img)
    gray = to_grayscale(img)

    if np.unique(gray).size < params.n_components:
        # uniform (or near-uniform) image: no stain structure to model
        empty = np.zeros(gray.shape, dtype=np.uint8)
        return AsaResult(empty, empty.astype(np.int32), [])

    model = fit_gmm(gray.ravel(), n_components=params.n_components, seed=seed)
    mask = gmm_threshold(model, gray, params.gmm_threshold, params.dark_foreground)
    mask = close_(open_(mask, 1), 1)

    processed = closing_by_reconstruction(
        opening_by_reconstruction(gray, params.se_radius), params.se_radius
    )

    fg, bg = extract_markers(mask, params.min_cell_size)
    n_cells = int(fg.max())
    if n_cells == 0:
        empty = np.zeros(gray.shape, dtype=np.uint8)
        return AsaResult(empty, empty.astype(np.int32), [])

    bg_label = n_cells + 1
    markers = fg.copy()
    markers[(bg > 0) & (fg == 0)] = bg_label
    flooded = watershed(processed, markers)
    flooded[flooded == bg_label] = 0
    # cells are stained pixels: confine instance labels to the foreground mask
    flooded[mask == 0] = 0

    seeds = [b.centroid for b in blobs_from_labels(fg)]
    vor = voronoi_partition(seeds, gray.shape)
    clipped = voronoi_clip(flooded, vor)

    labels = size_filter(clipped, params.min_cell_size, params.max_cell_size)
    labels = compact_labels(labels)

    contours = []
    for blob in blobs_from_labels(labels):
        c = trace_contour(blob)
        if len(c) >= params.smooth_window:
            c = smooth_contour(c, params.smooth_window, params.smooth_order)
        contours.append(c)
    return AsaResult(labels_to_mask(labels), labels, contours)


class AsaSegmenter(BaseEstimator):
    """Estimator facade over the adaptive pipeline.

    Stateless per image (the intensity mixture is refitted for every input),
    so `fit` only validates parameters; `predict` maps an EDF image to a
    cell label map.
    """

    def __init__(self, min_cell_size=30, max_cell_size=5000, gmm_threshold=0.5,
                 n_components=2, se_radius=2, smooth_window=7, smooth_order=2,
                 dark_foreground=True, random_state=0):
        self.min_cell_size = min_cell_size
        self.max_cell_size = max_cell_size
        self.gmm_threshold = gmm_threshold
        self.n_components = n_components
        self.se_radius = se_radius
        self.smooth_window = smooth_window
        self.smooth_order = smooth_order
        self.dark_foreground = dark_foreground
        self.random_state = random_state

    def _params(self) -> AsaParams:
        return AsaParams(
            min_cell_size=self.min_cell_size,
            max_cell_size=self.max_cell_size,
            gmm_threshold=self.gmm_threshold,
            n_components=self.n_components,
            se_radius=self.se_radius,
            smooth_window=self.smooth_window,
            smooth_order=self.smooth_order,
            dark_foreground=self.dark_foreground,
        )

    def fit(self, X=None, y=None) -> "AsaSegmenter":
        self._params()
        return self

    def segment(self, image: np.ndarray) -> AsaResult:
        return run_asa(image, self._params(), seed=self.random_state)

    def predict(self, image: np.ndarray) -> np.ndarray:
        return self.segment(image).labels
