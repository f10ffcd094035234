"""Image containers, color conversion, cropping and bit-exact 8-bit file I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .validation import check_image, check_mask, check_same_shape

# Rec. 601 luma weights.
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle, inclusive-exclusive bounds."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rect {self}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"negative origin {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def offset(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def contains(self, other: "Rect") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def to_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}

    @staticmethod
    def from_dict(d: dict) -> "Rect":
        return Rect(int(d["x0"]), int(d["y0"]), int(d["x1"]), int(d["y1"]))


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB raster as float64 in [0, 1].

    8-bit value k maps to k/255 so that ``save_image(load_image(f))`` is
    byte-identical for PNG input.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image: {path}")
    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im)
        elif im.mode == "RGB":
            arr = np.asarray(im)
        elif im.mode in ("I", "I;16", "I;16B", "F", "RGBA", "LA", "P"):
            raise ValueError(f"unsupported bit depth or mode '{im.mode}' in {path}")
        else:
            raise ValueError(f"unsupported image mode '{im.mode}' in {path}")
    return arr.astype(np.float64) / 255.0


def save_image(path: str | Path, img: np.ndarray) -> None:
    """Write an image as 8-bit PNG; values are quantized with round-half-up."""
    arr = check_image(img)
    data = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    PILImage.fromarray(data, mode=mode).save(Path(path), format="PNG")


def load_mask(path: str | Path) -> np.ndarray:
    """Load a {0, 255} mask file as uint8 {0, 1}."""
    arr = load_image(path)
    if arr.ndim != 2:
        raise ValueError(f"mask file must be grayscale: {path}")
    return (arr >= 0.5).astype(np.uint8)


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    mask = check_mask(mask)
    save_image(path, mask.astype(np.float64))


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """RGB to luminance with Rec. 601 weights; grayscale passes through."""
    arr = check_image(img)
    if arr.ndim == 2:
        return arr
    return arr @ GRAY_WEIGHTS


def crop(img: np.ndarray, r: Rect) -> np.ndarray:
    arr = np.asarray(img)
    h, w = arr.shape[:2]
    if not (0 <= r.x0 and r.x1 <= w and 0 <= r.y0 and r.y1 <= h):
        raise ValueError(f"rect {r} outside {w}x{h} image")
    return arr[r.y0 : r.y1, r.x0 : r.x1].copy()


def load_stack(paths: list[str | Path]) -> np.ndarray:
    """Load grayscale slices into an (S, H, W) stack; all slices must match."""
    if not paths:
        raise ValueError("empty stack")
    slices = []
    for p in paths:
        s = load_image(p)
        if s.ndim != 2:
            s = to_grayscale(s)
        slices.append(s)
    first = slices[0]
    for s in slices[1:]:
        check_same_shape(first, s, "stack slices")
    return np.stack(slices, axis=0)


def load_stack_dir(directory: str | Path) -> np.ndarray:
    """Load a stack from a directory, slices ordered lexicographically."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise FileNotFoundError(f"no .png slices in {directory}")
    return load_stack(paths)
