"""Synthetic stained-tissue scenes, stacks and corpora plus a scripted reviewer.

Cells are dark ellipses with mild radial gradients on a light background;
each scene carries exact instance geometry, so the disector ground truth
(dots for counted cells) is derived from the same classification rules the
pipeline uses.  The oracle reviewer mechanizes the human accept/reject
criterion: a mask is accepted when its separated cells match the annotation
one to one.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .asa import AsaParams, run_asa, separate_touching
from .disector import Annotation, DisectorFrame, Verdict, classify_blob, match_annotation
from .edf import edf_stack
from .labels import Blob
from .manifest import DatasetManifest, MouseSpec, build_manifest
from .raster import Rect, load_image, save_image, save_mask
from .validation import check_mask


@dataclass(frozen=True)
class SynthParams:
    width: int = 104
    height: int = 104
    frame: Rect = field(default_factory=lambda: Rect(24, 24, 80, 80))
    cell_count: tuple[int, int] = (4, 9)
    radius: tuple[float, float] = (4.0, 7.0)
    overlap_prob: float = 0.15
    bg_intensity: float = 0.85
    stain_intensity: float = 0.30
    stain_jitter: float = 0.06
    gradient: float = 0.25
    noise_sigma: float = 0.015
    slices: int = 3
    blur_scale: float = 1.2
    margin: int = 20
    center_region: Rect | None = None  # cell centers; None = whole image

    def __post_init__(self):
        if self.radius[0] <= 0 or self.radius[0] > self.radius[1]:
            raise ValueError("invalid radius range")
        if self.cell_count[0] < 0 or self.cell_count[0] > self.cell_count[1]:
            raise ValueError("invalid cell count range")
        if (self.frame.x0 < self.margin or self.frame.y0 < self.margin
                or self.frame.x1 + self.margin > self.width
                or self.frame.y1 + self.margin > self.height):
            raise ValueError("frame plus margin must fit inside the image")
        if self.slices < 1:
            raise ValueError("need at least one slice")


@dataclass
class GroundTruth:
    label_map: np.ndarray
    instances: list[tuple[np.ndarray, np.ndarray]]  # (ys, xs) per cell
    annotation: Annotation

    @property
    def counted(self) -> int:
        return len(self.annotation.dots)


@dataclass
class Scene:
    truth: GroundTruth
    ideal: np.ndarray
    cell_deltas: list[np.ndarray]
    params: SynthParams


def _ellipse_pixels(h, w, cx, cy, a, b, phi):
    cos_p, sin_p = math.cos(phi), math.sin(phi)
    r = int(math.ceil(max(a, b))) + 1
    y0, y1 = max(0, int(cy) - r), min(h, int(cy) + r + 1)
    x0, x1 = max(0, int(cx) - r), min(w, int(cx) + r + 1)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dx, dy = xs - cx, ys - cy
    u = (dx * cos_p + dy * sin_p) / a
    v = (-dx * sin_p + dy * cos_p) / b
    rho2 = u * u + v * v
    inside = rho2 <= 1.0
    return ys[inside], xs[inside], rho2[inside]


def gen_scene(p: SynthParams, seed: int = 0) -> Scene:
    """Random ellipse cells with exact instance labels and disector dots."""
    rng = np.random.default_rng(seed)
    h, w = p.height, p.width
    n = int(rng.integers(p.cell_count[0], p.cell_count[1] + 1))
    region = p.center_region or Rect(0, 0, w, h)

    centers: list[tuple[float, float, float]] = []  # (cx, cy, radius)
    shapes = []
    for _ in range(n):
        a = rng.uniform(*p.radius)
        b = a * rng.uniform(0.65, 1.0)
        phi = rng.uniform(0, math.pi)
        reach = max(a, b)
        lo_x = max(region.x0, reach + 1)
        hi_x = min(region.x1, w - reach - 2)
        lo_y = max(region.y0, reach + 1)
        hi_y = min(region.y1, h - reach - 2)
        placed = False
        for _ in range(200):
            cx = rng.uniform(lo_x, hi_x)
            cy = rng.uniform(lo_y, hi_y)
            if centers and rng.random() < p.overlap_prob:
                # touching-to-mild overlap: deep fusions are uncountable from
                # a mask alone, by any method
                ox, oy, orad = centers[int(rng.integers(len(centers)))]
                d = (orad + reach) * rng.uniform(0.78, 0.95)
                ang = rng.uniform(0, 2 * math.pi)
                cx = float(np.clip(ox + d * math.cos(ang), reach + 1, w - reach - 2))
                cy = float(np.clip(oy + d * math.sin(ang), reach + 1, h - reach - 2))
                placed = True
                break
            if all((cx - ox) ** 2 + (cy - oy) ** 2 > (reach + orad + 2) ** 2
                   for ox, oy, orad in centers):
                placed = True
                break
        if not placed:
            raise RuntimeError("infeasible cell packing after bounded retries")
        centers.append((cx, cy, reach))
        shapes.append((cx, cy, a, b, phi))

    label_map = np.zeros((h, w), dtype=np.int32)
    instances = []
    deltas = []
    for i, (cx, cy, a, b, phi) in enumerate(shapes):
        ys, xs, rho2 = _ellipse_pixels(h, w, cx, cy, a, b, phi)
        instances.append((ys, xs))
        label_map[ys, xs] = i + 1
        stain = p.stain_intensity + p.stain_jitter * rng.uniform(-1, 1)
        delta = np.zeros((h, w))
        delta[ys, xs] = (stain - p.bg_intensity) * (1.0 - p.gradient * rho2)
        deltas.append(delta)

    ideal = np.clip(p.bg_intensity + sum(deltas, np.zeros((h, w))), 0.0, 1.0)

    frame = DisectorFrame(p.frame)
    dots = []
    for ys, xs in instances:
        blob = Blob(0, ys, xs)
        if classify_blob(blob, frame) is Verdict.COUNTED:
            cx_, cy_ = blob.centroid
            dots.append((int(round(cx_)), int(round(cy_))))
    truth = GroundTruth(label_map, instances,
                        Annotation("", frame, dots))
    return Scene(truth, ideal, deltas, p)


def render_stack(scene: Scene, seed: int = 0) -> np.ndarray:
    """Through-focus (S, H, W) stack: each cell is sharp at its own depth."""
    p = scene.params
    rng = np.random.default_rng(seed)
    depths = rng.integers(0, p.slices, len(scene.cell_deltas))
    h, w = scene.ideal.shape
    slices = []
    for z in range(p.slices):
        img = np.full((h, w), p.bg_intensity)
        for delta, depth in zip(scene.cell_deltas, depths):
            sigma = abs(z - int(depth)) * p.blur_scale
            img = img + (gaussian_filter(delta, sigma, mode="nearest") if sigma > 0
                         else delta)
        if p.noise_sigma > 0:
            img = img + rng.normal(0.0, p.noise_sigma, (h, w))
        slices.append(np.clip(img, 0.0, 1.0))
    return np.stack(slices)


def item_seed(base_seed: int, image_id: str) -> int:
    """Stable per-item RNG seed derived from the corpus seed and the id."""
    return (int(base_seed) * 0x9E3779B1 + zlib.crc32(image_id.encode())) % (2**31)


def oracle_reviewer(pred_mask: np.ndarray, truth: GroundTruth | Annotation,
                    min_cell_size: int = 30) -> bool:
    """Mechanized human rule: accept iff separated cells match the dots 1-1."""
    ann = truth.annotation if isinstance(truth, GroundTruth) else truth
    labels = separate_touching(check_mask(pred_mask), min_cell_size)
    return match_annotation(labels, ann).accept


def gen_dataset(mice: list[MouseSpec], p: SynthParams, out_dir: str | Path,
                seed: int = 0) -> DatasetManifest:
    """Write a full synthetic corpus: stacks, fused EDF images, annotations,
    instance label maps and the manifest.  Deterministic given the seed."""
    out_dir = Path(out_dir)
    manifest = build_manifest(mice, root=out_dir)
    for sub in ("stacks", "edf", "ann", "truth"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    for item in manifest.items:
        s = item_seed(seed, item.image_id)
        scene = gen_scene(p, seed=s)
        stack = render_stack(scene, seed=s + 1)
        stack_dir = out_dir / item.stack_dir
        stack_dir.mkdir(parents=True, exist_ok=True)
        for z in range(stack.shape[0]):
            save_image(stack_dir / f"slice_{z:02d}.png", stack[z])
        fused, _ = edf_stack(stack)
        save_image(out_dir / item.edf_path, fused)
        scene.truth.annotation.image_id = item.image_id
        scene.truth.annotation.save(out_dir / item.annotation_path)
        if scene.truth.label_map.max() > 255:
            raise ValueError("instance count exceeds the 8-bit label file range")
        save_image(out_dir / f"truth/{item.image_id}.png",
                   scene.truth.label_map.astype(np.float64) / 255.0)
    manifest.save(out_dir / "manifest.json")
    (out_dir / "synth_config.json").write_text(json.dumps(
        {"seed": seed, "width": p.width, "height": p.height,
         "frame": {"x0": p.frame.x0, "y0": p.frame.y0,
                   "x1": p.frame.x1, "y1": p.frame.y1},
         "slices": p.slices}, indent=1) + "\n")
    return manifest


def bootstrap_asa_verdicts(manifest: DatasetManifest, test_mouse_id: str,
                           asa: AsaParams, degraded: AsaParams,
                           degrade_fraction: float, seed: int = 0,
                           min_cell_size: int = 30) -> dict[str, str]:
    """Run the adaptive pipeline over every non-test item and review it.

    A seeded fraction of items is segmented with the degraded parameters,
    recreating the accepted/rejected imbalance that seeds the first
    iteration.  Masks land next to the corpus under asa/.
    """
    rng = np.random.default_rng(seed)
    (Path(manifest.root) / "asa").mkdir(parents=True, exist_ok=True)
    verdicts: dict[str, str] = {}
    for item in manifest.items:
        if item.mouse_id == test_mouse_id:
            continue
        params = degraded if rng.random() < degrade_fraction else asa
        edf_img = load_image(manifest.resolve(item.edf_path))
        result = run_asa(edf_img, params, seed=item_seed(seed, item.image_id))
        save_mask(manifest.resolve(item.asa_mask_path), result.mask)
        ann = Annotation.load(manifest.resolve(item.annotation_path))
        accepted = oracle_reviewer(result.mask, ann, min_cell_size=min_cell_size)
        verdicts[item.image_id] = "accept" if accepted else "reject"
    return verdicts


def degrade_params(asa: AsaParams, severity: float) -> AsaParams:
    """Detune the pipeline: the posterior threshold drifts to the 0.95 bound
    and the size window collapses (minimum up 7x, maximum halved at worst),
    so detuned runs drop or merge cells and fail review.

    severity 0 is the identity; 1 is the documented worst case.
    """
    if not (0.0 <= severity <= 1.0):
        raise ValueError("severity must be in [0, 1]")
    if severity == 0.0:
        return replace(asa)
    new_threshold = asa.gmm_threshold + (0.95 - asa.gmm_threshold) * severity
    new_min = int(round(asa.min_cell_size * (1.0 + 6.0 * severity)))
    new_max = max(int(round(asa.max_cell_size * (1.0 - 0.5 * severity))), new_min + 1)
    return replace(asa, gmm_threshold=new_threshold,
                   min_cell_size=new_min, max_cell_size=new_max)
