"""Joint elastic/rotation augmentation of (image, mask) pairs.

Expansion recipe: the original pair plus two elastic warps (distinct seeds),
each rotated through every multiple of 15 degrees, yields 72 pairs counting
the untouched original.  Masks always travel through nearest-neighbor
sampling so they stay binary; image and mask share the exact same geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .disector import DisectorFrame
from .raster import Rect, crop, save_image, save_mask
from .validation import check_image, check_mask, check_same_shape

ROTATION_STEP_DEG = 15
REFERENCE_CROP = 128.0
FRAME_MARGIN = 20


@dataclass(frozen=True)
class ElasticParams:
    """Displacement magnitude/smoothness in units of a 128-px crop."""

    alpha: float = 34.0
    sigma: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.sigma <= 0:
            raise ValueError("alpha must be >= 0 and sigma > 0")


@dataclass(frozen=True)
class AugmentedPair:
    image: np.ndarray
    mask: np.ndarray
    base: str      # base | elastic1 | elastic2
    angle: int


def _displacement_field(shape, p: ElasticParams):
    scale = min(shape) / REFERENCE_CROP
    rng = np.random.default_rng(p.seed)
    dx = rng.uniform(-1.0, 1.0, shape)
    dy = rng.uniform(-1.0, 1.0, shape)
    sigma = p.sigma * scale
    alpha = p.alpha * scale
    dx = gaussian_filter(dx, sigma, mode="reflect") * alpha
    dy = gaussian_filter(dy, sigma, mode="reflect") * alpha
    return dx, dy


def _warp(img, coords, order, cval=None):
    mode = "nearest" if cval is None else "constant"
    kwargs = {} if cval is None else {"cval": cval}
    if img.ndim == 2:
        return map_coordinates(img, coords, order=order, mode=mode, **kwargs)
    return np.stack(
        [map_coordinates(img[..., c], coords, order=order, mode=mode, **kwargs)
         for c in range(img.shape[2])],
        axis=-1,
    )


def elastic_deform(img: np.ndarray, mask: np.ndarray,
                   p: ElasticParams) -> tuple[np.ndarray, np.ndarray]:
    """Warp both inputs by one smoothed random displacement field.

    The image is sampled bilinearly, the mask nearest-neighbor; samples past
    the border clamp to it.
    """
    img = check_image(img)
    mask = check_mask(mask)
    check_same_shape(img, mask, "image/mask")
    dx, dy = _displacement_field(mask.shape, p)
    ys, xs = np.mgrid[0 : mask.shape[0], 0 : mask.shape[1]].astype(np.float64)
    coords = (ys + dy, xs + dx)
    warped = np.clip(_warp(img, coords, order=1), 0.0, 1.0)
    warped_mask = _warp(mask, coords, order=0).astype(np.uint8)
    return warped, warped_mask


def _border_mean(img: np.ndarray) -> float:
    ring = np.concatenate([img[0].ravel(), img[-1].ravel(),
                           img[1:-1, 0].ravel(), img[1:-1, -1].ravel()])
    return float(ring.mean())


def rotate_pair(img: np.ndarray, mask: np.ndarray,
                angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotate both inputs about the image center, keeping the canvas size.

    Uncovered corners take the image's border-mean intensity (0 for the mask).
    """
    img = check_image(img)
    mask = check_mask(mask)
    check_same_shape(img, mask, "image/mask")
    if not (0.0 <= angle < 360.0):
        raise ValueError(f"angle must be in [0, 360), got {angle}")
    if angle == 0.0:
        return img.copy(), mask.copy()
    h, w = mask.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    # inverse map: rotate output coordinates back into the source frame
    rel_x, rel_y = xs - cx, ys - cy
    src_x = cos_t * rel_x + sin_t * rel_y + cx
    src_y = -sin_t * rel_x + cos_t * rel_y + cy
    coords = (src_y, src_x)
    rotated = np.clip(_warp(img, coords, order=1, cval=_border_mean(img)), 0.0, 1.0)
    rotated_mask = _warp(mask, coords, order=0, cval=0).astype(np.uint8)
    return rotated, rotated_mask


def rotation_angles() -> list[int]:
    return list(range(0, 360, ROTATION_STEP_DEG))


def augment_pair(img: np.ndarray, mask: np.ndarray, seed: int = 0) -> list[AugmentedPair]:
    """72 augmented pairs: {original, 2 elastic warps} x 24 rotation angles."""
    bases = [
        ("base", img, check_mask(mask)),
        ("elastic1", *elastic_deform(img, mask, ElasticParams(seed=seed * 2))),
        ("elastic2", *elastic_deform(img, mask, ElasticParams(seed=seed * 2 + 1))),
    ]
    out = []
    for name, b_img, b_mask in bases:
        for angle in rotation_angles():
            if angle == 0:
                out.append(AugmentedPair(np.asarray(b_img, dtype=np.float64).copy(),
                                         b_mask.copy(), name, 0))
            else:
                r_img, r_mask = rotate_pair(b_img, b_mask, angle)
                out.append(AugmentedPair(r_img, r_mask, name, angle))
    return out


def crop_to_frame(img: np.ndarray, frame: DisectorFrame,
                  margin: int = FRAME_MARGIN) -> tuple[np.ndarray, DisectorFrame]:
    """Crop to the frame rect grown by `margin`, clamped to the image.

    Returns the crop plus the frame re-expressed in crop coordinates.
    """
    arr = np.asarray(img)
    h, w = arr.shape[:2]
    r = frame.rect
    grown = Rect(
        max(r.x0 - margin, 0), max(r.y0 - margin, 0),
        min(r.x1 + margin, w), min(r.y1 + margin, h),
    )
    new_frame = DisectorFrame(r.offset(-grown.x0, -grown.y0), frame.thickness)
    return crop(arr, grown), new_frame


def write_augmented_set(out_dir: str | Path, pairs: list[AugmentedPair],
                        seed: int) -> None:
    """Numbered image/mask pairs plus a provenance sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, pair in enumerate(pairs):
        img_name = f"{i:03d}_image.png"
        mask_name = f"{i:03d}_mask.png"
        save_image(out_dir / img_name, pair.image)
        save_mask(out_dir / mask_name, pair.mask)
        records.append({"image": img_name, "mask": mask_name,
                        "base": pair.base, "angle": pair.angle})
    sidecar = {"seed": seed, "count": len(pairs), "pairs": records}
    (out_dir / "provenance.json").write_text(json.dumps(sidecar, indent=1) + "\n")
