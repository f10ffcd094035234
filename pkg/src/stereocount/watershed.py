"""Marker-controlled watershed, marker extraction and Voronoi regularization.

The flood is Meyer-style: pixels are assigned in ascending priority, seeded
from the markers, 8-connected, with a FIFO counter breaking priority ties so
the result is fully deterministic.  Ridge pixels go to whichever label
arrives first.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from scipy import ndimage

from .morphology import dilate, reconstruct_by_dilation
from .validation import check_labels, check_mask

# Fixed scan order for the 8-neighborhood; part of the tie-break contract.
OFFSETS8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))

STRUCTURE8 = np.ones((3, 3), dtype=bool)

# h-maxima suppression depth relative to the minimum cell radius.
H_MAXIMA_FACTOR = 0.3


def watershed(priority: np.ndarray, markers: np.ndarray,
              domain: np.ndarray | None = None) -> np.ndarray:
    """Priority-flood labeling from marker seeds.

    Every pixel of the domain (whole image by default) receives a label;
    marker pixels keep theirs.  Flooding pops the queue in ascending
    (priority value, insertion order), so equal priorities resolve FIFO.
    """
    priority = np.asarray(priority, dtype=np.float64)
    markers = check_labels(markers, "markers")
    if priority.shape != markers.shape:
        raise ValueError("priority/markers shape mismatch")
    if not np.isfinite(priority).all():
        raise ValueError("priority must be finite")
    if markers.max() < 1:
        raise ValueError("empty marker map")

    h, w = priority.shape
    if domain is None:
        inside = np.ones((h, w), dtype=bool)
    else:
        inside = np.asarray(domain).astype(bool)
        if inside.shape != (h, w):
            raise ValueError("domain shape mismatch")

    out = np.where(inside, markers, 0).astype(np.int32)
    heap: list[tuple[float, int, int, int, int]] = []
    counter = 0
    seeds = np.argwhere(out > 0)
    for y, x in seeds:
        lab = int(out[y, x])
        for dy, dx in OFFSETS8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and inside[ny, nx] and out[ny, nx] == 0:
                heapq.heappush(heap, (priority[ny, nx], counter, ny, nx, lab))
                counter += 1
    while heap:
        _, _, y, x, lab = heapq.heappop(heap)
        if out[y, x] != 0:
            continue
        out[y, x] = lab
        for dy, dx in OFFSETS8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and inside[ny, nx] and out[ny, nx] == 0:
                heapq.heappush(heap, (priority[ny, nx], counter, ny, nx, lab))
                counter += 1
    return out


def voronoi_partition(seeds: list[tuple[float, float]], dims: tuple[int, int]) -> np.ndarray:
    """Label every pixel of an (H, W) grid by its nearest seed (x, y).

    Seed i owns label i + 1; exact distance ties go to the lowest seed index.
    """
    h, w = int(dims[0]), int(dims[1])
    if not seeds:
        raise ValueError("no seeds")
    ys, xs = np.mgrid[0:h, 0:w]
    best = np.full((h, w), np.inf)
    labels = np.zeros((h, w), dtype=np.int32)
    for i, (sx, sy) in enumerate(seeds):
        if not (0 <= sx < w and 0 <= sy < h):
            raise ValueError(f"seed {i} at ({sx}, {sy}) outside {w}x{h} grid")
        d2 = (xs - sx) ** 2 + (ys - sy) ** 2
        better = d2 < best
        best[better] = d2[better]
        labels[better] = i + 1
    return labels


def voronoi_clip(ws: np.ndarray, vor: np.ndarray) -> np.ndarray:
    """Zero watershed pixels that leaked outside their own seed's Voronoi cell."""
    ws = check_labels(ws, "watershed labels")
    vor = check_labels(vor, "voronoi labels")
    if ws.shape != vor.shape:
        raise ValueError("label map shape mismatch")
    ws_set = set(np.unique(ws)) - {0}
    vor_set = set(np.unique(vor)) - {0}
    if not ws_set <= vor_set:
        raise ValueError(f"label-space mismatch: watershed labels {sorted(ws_set - vor_set)} "
                         "have no Voronoi cell")
    return np.where(ws == vor, ws, 0).astype(np.int32)


def h_maxima_depth(min_cell_size: int) -> float:
    return H_MAXIMA_FACTOR * math.sqrt(min_cell_size / math.pi)


def regional_maxima(f: np.ndarray, exclude: np.ndarray | None = None) -> np.ndarray:
    """Boolean map of 8-connected plateaus with no strictly greater neighbor.

    A plateau counts only if none of its member pixels sees a greater value,
    so partial plateaus leaking toward higher terrain are rejected.
    `exclude` removes pixels (and their plateaus' candidacy is judged without
    them) from the result, e.g. the background.
    """
    f = np.asarray(f, dtype=np.float64)
    has_greater = f < ndimage.grey_dilation(f, footprint=STRUCTURE8, mode="nearest")
    keep = np.ones(f.shape, dtype=bool) if exclude is None else ~np.asarray(exclude, bool)
    out = np.zeros(f.shape, dtype=bool)
    for value in np.unique(f[keep]):
        plateau = (f == value) & keep
        comp, n = ndimage.label(plateau, structure=STRUCTURE8)
        if n == 0:
            continue
        # a component survives only if no member has a strictly greater neighbor
        killed = ndimage.maximum(has_greater.astype(np.uint8), comp,
                                 index=np.arange(1, n + 1))
        good = np.flatnonzero(np.atleast_1d(killed) == 0) + 1
        if good.size:
            out |= np.isin(comp, good)
    return out


def extract_markers(mask: np.ndarray, min_cell_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Foreground/background watershed markers from a binary mask.

    Foreground markers are the h-maxima of the mask's Euclidean distance
    transform (suppression depth tied to the minimum cell radius), labeled
    8-connected.  Background is everything beyond a 3-pixel dilation.
    """
    mask = check_mask(mask)
    bg = (dilate(mask, se_radius=3) == 0).astype(np.uint8)
    if mask.max() == 0:
        return np.zeros(mask.shape, dtype=np.int32), bg
    dist = ndimage.distance_transform_edt(mask)
    depth = h_maxima_depth(min_cell_size)
    suppressed = reconstruct_by_dilation(np.maximum(dist - depth, 0.0), dist)
    maxima = regional_maxima(suppressed, exclude=(mask == 0) | (suppressed <= 0))
    fg, _ = ndimage.label(maxima, structure=STRUCTURE8)
    return fg.astype(np.int32), bg
