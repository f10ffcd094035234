"""Grayscale and binary morphology with disk structuring elements.

Erosion/dilation are plain min/max filters (replicated border).  The
reconstruction operators iterate geodesic dilation/erosion under the input
to a fixpoint, 8-connected, so contours of structures that survive are
restored exactly.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_SQUARE3 = np.ones((3, 3), dtype=bool)


def disk_element(radius: int) -> np.ndarray:
    """Boolean disk footprint: offsets with dx^2 + dy^2 <= radius^2."""
    radius = int(radius)
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return (yy * yy + xx * xx) <= radius * radius


def erode(img: np.ndarray, se_radius: int = 1) -> np.ndarray:
    return _filter(img, se_radius, ndimage.grey_erosion)


def dilate(img: np.ndarray, se_radius: int = 1) -> np.ndarray:
    return _filter(img, se_radius, ndimage.grey_dilation)


def open_(img: np.ndarray, se_radius: int = 1) -> np.ndarray:
    return dilate(erode(img, se_radius), se_radius)


def close_(img: np.ndarray, se_radius: int = 1) -> np.ndarray:
    return erode(dilate(img, se_radius), se_radius)


def reconstruct_by_dilation(seed: np.ndarray, limit: np.ndarray) -> np.ndarray:
    """Geodesic dilation of seed under limit iterated to stability.

    Requires seed <= limit pointwise; the result lies between the two.
    """
    return _reconstruct(seed, limit, dilation=True)


def reconstruct_by_erosion(seed: np.ndarray, limit: np.ndarray) -> np.ndarray:
    """Geodesic erosion of seed above limit iterated to stability (seed >= limit)."""
    return _reconstruct(seed, limit, dilation=False)


def opening_by_reconstruction(img: np.ndarray, se_radius: int = 1) -> np.ndarray:
    """Remove structures thinner than the disk while restoring the rest exactly."""
    img = np.asarray(img, dtype=np.float64)
    return reconstruct_by_dilation(erode(img, se_radius), img)


def closing_by_reconstruction(img: np.ndarray, se_radius: int = 1) -> np.ndarray:
    """Fill dark structures thinner than the disk, restoring wide ones exactly."""
    img = np.asarray(img, dtype=np.float64)
    return reconstruct_by_erosion(dilate(img, se_radius), img)


def _filter(img: np.ndarray, se_radius: int, op) -> np.ndarray:
    arr = np.asarray(img)
    out = op(arr.astype(np.float64, copy=False), footprint=disk_element(se_radius),
             mode="nearest")
    if np.issubdtype(arr.dtype, np.integer):
        return np.rint(out).astype(arr.dtype)
    return out


def _reconstruct(seed: np.ndarray, limit: np.ndarray, dilation: bool) -> np.ndarray:
    seed = np.asarray(seed, dtype=np.float64)
    limit = np.asarray(limit, dtype=np.float64)
    if seed.shape != limit.shape:
        raise ValueError(f"seed/limit shape mismatch {seed.shape} vs {limit.shape}")
    if dilation:
        if (seed > limit + 1e-12).any():
            raise ValueError("reconstruction by dilation requires seed <= limit")
        step, clip = ndimage.grey_dilation, np.minimum
    else:
        if (seed < limit - 1e-12).any():
            raise ValueError("reconstruction by erosion requires seed >= limit")
        step, clip = ndimage.grey_erosion, np.maximum

    current = clip(seed, limit)
    while True:
        nxt = clip(step(current, footprint=_SQUARE3, mode="nearest"), limit)
        if np.array_equal(nxt, current):
            return current
        current = nxt
