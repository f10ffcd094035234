"""Extended-depth-of-field: collapse a through-focus stack to one sharp image.

Per-pixel focus is scored by local intensity variance; each output pixel is
copied from the slice with the highest score after median smoothing of the
slice-index map, so every output pixel provably comes from some input slice.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .validation import check_gray, check_odd_window


def focus_measure(slice_img: np.ndarray, window: int = 9) -> np.ndarray:
    """Local variance of intensities in a window x window neighborhood.

    Border pixels use the replicated (clamped) border.  Constant regions
    score exactly 0.
    """
    img = check_gray(slice_img, "slice")
    window = check_odd_window(window)
    mean = ndimage.uniform_filter(img, size=window, mode="nearest")
    mean_sq = ndimage.uniform_filter(img * img, size=window, mode="nearest")
    var = mean_sq - mean * mean
    return np.maximum(var, 0.0)


def edf_stack(
    stack: np.ndarray, window: int = 9, smooth: int = 5
) -> tuple[np.ndarray, np.ndarray]:
    """Fuse an (S, H, W) stack into a single image plus a depth-index map.

    Each pixel selects the slice with maximal focus score (ties resolve to
    the lowest slice index); the index map is median-filtered with a
    smooth x smooth window before sampling.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] < 1:
        raise ValueError(f"expected (S, H, W) stack with S >= 1, got {stack.shape}")
    smooth = check_odd_window(smooth, "smooth", minimum=1)

    scores = np.stack([focus_measure(s, window) for s in stack], axis=0)
    depth = np.argmax(scores, axis=0).astype(np.int32)
    if smooth > 1 and stack.shape[0] > 1:
        depth = ndimage.median_filter(depth, size=smooth, mode="nearest")

    rows, cols = np.indices(depth.shape)
    fused = stack[depth, rows, cols]
    return fused, depth
