"""Input validation helpers shared by every module.

Images are plain numpy arrays: grayscale ``(H, W)`` or RGB ``(H, W, 3)``
float64 in [0, 1].  Binary masks are ``(H, W)`` uint8 in {0, 1}.  Label maps
are ``(H, W)`` int32 with 0 as background.
"""

from __future__ import annotations

import numpy as np


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate a gray or RGB float image in [0, 1] and return it as float64."""
    arr = np.asarray(img)
    if arr.ndim == 2:
        pass
    elif arr.ndim == 3 and arr.shape[2] == 3:
        pass
    else:
        raise ValueError(f"{name}: expected (H, W) or (H, W, 3), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name}: empty image {arr.shape}")
    arr = arr.astype(np.float64, copy=False)
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: non-finite pixel values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: values outside [0, 1]")
    return arr


def check_gray(img: np.ndarray, name: str = "image") -> np.ndarray:
    arr = check_image(img, name)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected grayscale (H, W), got shape {arr.shape}")
    return arr


def check_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    """Validate a binary mask and return it as uint8 in {0, 1}."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected (H, W), got shape {arr.shape}")
    vals = np.unique(arr)
    if not np.isin(vals, (0, 1)).all():
        raise ValueError(f"{name}: values outside {{0, 1}}: {vals[:8]}")
    return arr.astype(np.uint8, copy=False)


def check_labels(labels: np.ndarray, name: str = "labels") -> np.ndarray:
    """Validate a nonnegative integer label map and return it as int32."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected (H, W), got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name}: expected integer dtype, got {arr.dtype}")
    if arr.min() < 0:
        raise ValueError(f"{name}: negative labels")
    return arr.astype(np.int32, copy=False)


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def check_odd_window(window: int, name: str = "window", minimum: int = 3) -> int:
    window = int(window)
    if window < minimum or window % 2 == 0:
        raise ValueError(f"{name}: must be odd and >= {minimum}, got {window}")
    return window
