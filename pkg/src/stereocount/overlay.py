"""Review overlays: EDF plus mask contour, annotation dots and frame lines.

Colors follow the annotation convention: inclusion edges pure green,
exclusion edges pure red, counted-cell dots blue, mask contours yellow.
"""

from __future__ import annotations

import numpy as np

from .disector import DisectorFrame
from .morphology import erode
from .raster import to_grayscale
from .validation import check_image, check_mask

GREEN = (0.0, 1.0, 0.0)
RED = (1.0, 0.0, 0.0)
BLUE = (0.0, 0.0, 1.0)
YELLOW = (1.0, 1.0, 0.0)

INCLUSION_EDGES = ("top", "right")
EXCLUSION_EDGES = ("bottom", "left")


def _paint_band(img, band, color):
    img[band.y0 : band.y1, band.x0 : band.x1] = color


def draw_frame(img: np.ndarray, frame: DisectorFrame) -> None:
    bands = frame.edge_bands()
    for name in INCLUSION_EDGES:
        _paint_band(img, bands[name], GREEN)
    for name in EXCLUSION_EDGES:
        _paint_band(img, bands[name], RED)


def draw_dots(img: np.ndarray, dots, radius: int = 1) -> None:
    h, w = img.shape[:2]
    for x, y in dots:
        y0, y1 = max(y - radius, 0), min(y + radius + 1, h)
        x0, x1 = max(x - radius, 0), min(x + radius + 1, w)
        img[y0:y1, x0:x1] = BLUE


def mask_contour_pixels(mask: np.ndarray) -> np.ndarray:
    mask = check_mask(mask)
    return (mask - erode(mask, 1)).astype(bool)


def render_overlay(edf: np.ndarray, frame: DisectorFrame,
                   mask: np.ndarray | None = None,
                   dots=None) -> np.ndarray:
    """RGB overlay image in [0, 1]."""
    gray = to_grayscale(check_image(edf))
    out = np.repeat(gray[..., None], 3, axis=2)
    if mask is not None and mask.max() > 0:
        out[mask_contour_pixels(mask)] = YELLOW
    if dots:
        draw_dots(out, dots)
    draw_frame(out, frame)
    return out
