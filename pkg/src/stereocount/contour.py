"""Blob boundary tracing and Savitzky-Golay contour smoothing."""

from __future__ import annotations

import numpy as np

from .labels import Blob

# Moore neighborhood in clockwise screen order (x right, y down).
_CLOCKWISE = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1))


def trace_contour(blob: Blob) -> np.ndarray:
    """Moore-neighbor boundary trace of a blob, clockwise.

    Returns an (N, 2) array of (x, y) boundary pixel coordinates starting at
    the topmost-leftmost boundary pixel.  A single-pixel blob yields that
    point repeated four times (degenerate closed contour).
    """
    pixels = set(zip(blob.xs.tolist(), blob.ys.tolist()))
    start = min(pixels, key=lambda p: (p[1], p[0]))

    # entered from the west, which is provably outside for the start pixel
    p = start
    backtrack = (start[0] - 1, start[1])
    first_state = (p, backtrack)
    points = [p]
    while True:
        nxt, new_backtrack = _next_clockwise(p, backtrack, pixels)
        if nxt is None:
            # isolated pixel: no neighbors in the blob
            return np.array([start] * 4, dtype=np.float64)
        p, backtrack = nxt, new_backtrack
        if (p, backtrack) == first_state:
            break
        points.append(p)
    while len(points) < 4:
        points.append(points[-1])
    return np.asarray(points, dtype=np.float64)


def _next_clockwise(p, backtrack, pixels):
    # scan the Moore neighborhood clockwise starting just after the backtrack
    dx, dy = backtrack[0] - p[0], backtrack[1] - p[1]
    start_idx = _CLOCKWISE.index((dx, dy))
    prev = backtrack
    for k in range(1, 9):
        ox, oy = _CLOCKWISE[(start_idx + k) % 8]
        cand = (p[0] + ox, p[1] + oy)
        if cand in pixels:
            return cand, prev
        prev = cand
    return None, None


def savgol_coeffs(window: int, order: int) -> np.ndarray:
    """Smoothing coefficients from a local least-squares polynomial fit.

    The center value of a degree-`order` polynomial fitted over `window`
    consecutive samples is a fixed linear combination of the samples; the
    returned vector holds those weights.
    """
    window = int(window)
    order = int(order)
    if window % 2 == 0 or window < 3:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    if order < 0 or window <= order:
        raise ValueError(f"need window > order >= 0, got {window} <= {order}")
    half = window // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    design = np.vander(t, order + 1, increasing=True)
    # value at t=0 of the LS fit = first row of the pseudoinverse
    return np.linalg.pinv(design)[0]


def smooth_contour(contour: np.ndarray, window: int = 7, order: int = 2) -> np.ndarray:
    """Apply Savitzky-Golay smoothing to the cyclic x(t) and y(t) sequences."""
    pts = np.asarray(contour, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
        raise ValueError(f"contour must be (N >= 4, 2), got {pts.shape}")
    coeffs = savgol_coeffs(window, order)
    if pts.shape[0] < window:
        raise ValueError(f"contour of {pts.shape[0]} points too short for window {window}")
    half = window // 2
    out = np.empty_like(pts)
    for axis in range(2):
        seq = pts[:, axis]
        padded = np.concatenate([seq[-half:], seq, seq[:half]])
        out[:, axis] = np.convolve(padded, coeffs, mode="valid")
    return out
