"""Encoder-decoder network assembly, forward/backward and prediction.

Architecture for depth D, base width B: D encoder blocks of two 3x3
conv+ReLU layers followed by 2x2 maxpool, a two-conv bottleneck, then D
decoder blocks of nearest-neighbor upsample + 3x3 conv, skip concatenation
with the mirror encoder output, and two 3x3 conv+ReLU layers; a 1x1 conv
with sigmoid produces the per-pixel foreground probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..validation import check_gray, check_mask
from . import layers as L


@dataclass
class NetworkParams:
    depth: int
    base_channels: int
    in_channels: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.depth, self.base_channels, self.in_channels,
            {k: v.copy() for k, v in self.arrays.items()},
        )

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(
            self.depth, self.base_channels, self.in_channels,
            {k: v.astype(dtype) for k, v in self.arrays.items()},
        )


def _conv_shapes(depth: int, base: int, in_ch: int) -> list[tuple[str, int, int, int]]:
    """(name, out_ch, in_ch, kernel) for every conv layer in forward order."""
    shapes = []
    ch = in_ch
    for i in range(depth):
        width = base * 2**i
        shapes.append((f"enc{i}_conv1", width, ch, 3))
        shapes.append((f"enc{i}_conv2", width, width, 3))
        ch = width
    bottleneck = base * 2**depth
    shapes.append(("bottleneck_conv1", bottleneck, ch, 3))
    shapes.append(("bottleneck_conv2", bottleneck, bottleneck, 3))
    ch = bottleneck
    for i in reversed(range(depth)):
        width = base * 2**i
        shapes.append((f"dec{i}_up", width, ch, 3))
        shapes.append((f"dec{i}_conv1", width, 2 * width, 3))
        shapes.append((f"dec{i}_conv2", width, width, 3))
        ch = width
    shapes.append(("head", 1, ch, 1))
    return shapes


def build_net(depth: int, base_channels: int, seed: int = 0,
              in_channels: int = 1, dtype=np.float64) -> NetworkParams:
    """He-initialized parameters, deterministic for a given seed."""
    if depth < 1 or base_channels < 1:
        raise ValueError("depth and base_channels must be >= 1")
    rng = np.random.default_rng(seed)
    params = NetworkParams(depth, base_channels, in_channels)
    for name, out_ch, in_ch, k in _conv_shapes(depth, base_channels, in_channels):
        fan_in = in_ch * k * k
        params.arrays[f"{name}_w"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, k, k)
        ).astype(dtype)
        params.arrays[f"{name}_b"] = np.zeros(out_ch, dtype=dtype)
    return params


def param_count(params: NetworkParams) -> int:
    return sum(a.size for a in params.arrays.values())


def _conv_relu(x, params, name, caches):
    a = params.arrays
    z, c_conv = L.conv3_forward(x, a[f"{name}_w"], a[f"{name}_b"])
    h, c_relu = L.relu_forward(z)
    caches[name] = (c_conv, c_relu)
    return h


def forward(params: NetworkParams, x: np.ndarray, with_cache: bool = False):
    """Probability map for a (N, C, H, W) batch; H and W must be 2^depth multiples."""
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != params.in_channels:
        raise ValueError(f"expected (N, {params.in_channels}, H, W), got {x.shape}")
    n, _, h, w = x.shape
    stride = 2**params.depth
    if h % stride or w % stride:
        raise ValueError(f"input {h}x{w} not divisible by 2^{params.depth}")

    a = params.arrays
    caches: dict = {}
    skips = []
    cur = x
    for i in range(params.depth):
        cur = _conv_relu(cur, params, f"enc{i}_conv1", caches)
        cur = _conv_relu(cur, params, f"enc{i}_conv2", caches)
        skips.append(cur)
        cur, c_pool = L.maxpool2_forward(cur)
        caches[f"pool{i}"] = c_pool
    cur = _conv_relu(cur, params, "bottleneck_conv1", caches)
    cur = _conv_relu(cur, params, "bottleneck_conv2", caches)
    for i in reversed(range(params.depth)):
        cur = L.upsample2_forward(cur)
        cur, c_up = L.conv3_forward(cur, a[f"dec{i}_up_w"], a[f"dec{i}_up_b"])
        caches[f"dec{i}_up"] = c_up
        cur = np.concatenate([skips[i], cur], axis=1)
        cur = _conv_relu(cur, params, f"dec{i}_conv1", caches)
        cur = _conv_relu(cur, params, f"dec{i}_conv2", caches)
    logits, c_head = L.conv1_forward(cur, a["head_w"], a["head_b"])
    caches["head"] = c_head
    probs = L.sigmoid(logits)
    if not np.isfinite(probs).all():
        raise FloatingPointError("non-finite activations in forward pass")
    if with_cache:
        return probs, caches
    return probs


def loss(probs: np.ndarray, target: np.ndarray) -> float:
    if probs.shape != target.shape:
        raise ValueError(f"shape mismatch {probs.shape} vs {target.shape}")
    return L.bce_loss(probs, target)


def _conv_relu_backward(d, name, caches, grads):
    c_conv, c_relu = caches[name]
    d = L.relu_backward(d, c_relu)
    d, dw, db = L.conv3_backward(d, c_conv)
    grads[f"{name}_w"] = dw
    grads[f"{name}_b"] = db
    return d


def backward(params: NetworkParams, x: np.ndarray, target: np.ndarray):
    """Loss and exact gradients of the mean BCE w.r.t. every parameter."""
    probs, caches = forward(params, x, with_cache=True)
    if probs.shape != target.shape:
        raise ValueError(f"target shape {target.shape} != output {probs.shape}")
    cost = L.bce_loss(probs, target)

    grads: dict[str, np.ndarray] = {}
    d = L.bce_sigmoid_grad(probs, target)
    d, dw, db = L.conv1_backward(d, caches["head"])
    grads["head_w"] = dw
    grads["head_b"] = db

    width0 = params.base_channels
    for i in range(params.depth):
        width = width0 * 2**i
        d = _conv_relu_backward(d, f"dec{i}_conv2", caches, grads)
        d = _conv_relu_backward(d, f"dec{i}_conv1", caches, grads)
        d_skip, d = d[:, :width], d[:, width:]
        d, dw, db = L.conv3_backward(d, caches[f"dec{i}_up"])
        grads[f"dec{i}_up_w"] = dw
        grads[f"dec{i}_up_b"] = db
        d = L.upsample2_backward(d)
        caches[f"skipgrad{i}"] = d_skip

    d = _conv_relu_backward(d, "bottleneck_conv2", caches, grads)
    d = _conv_relu_backward(d, "bottleneck_conv1", caches, grads)

    for i in reversed(range(params.depth)):
        d = L.maxpool2_backward(d, caches[f"pool{i}"])
        d = d + caches[f"skipgrad{i}"]
        d = _conv_relu_backward(d, f"enc{i}_conv2", caches, grads)
        d = _conv_relu_backward(d, f"enc{i}_conv1", caches, grads)
    return cost, grads


def _pad_to_multiple(img: np.ndarray, stride: int) -> tuple[np.ndarray, int, int]:
    h, w = img.shape
    ph = (-h) % stride
    pw = (-w) % stride
    if ph or pw:
        img = np.pad(img, ((0, ph), (0, pw)), mode="reflect")
    return img, h, w


def predict_proba(params: NetworkParams, image: np.ndarray) -> np.ndarray:
    """Per-pixel foreground probability; input is reflect-padded as needed."""
    img = check_gray(image)
    padded, h, w = _pad_to_multiple(img, 2**params.depth)
    dtype = params.arrays["head_b"].dtype
    batch = padded[None, None].astype(dtype)
    probs = forward(params, batch)[0, 0]
    return probs[:h, :w].astype(np.float64)


def predict_mask(params: NetworkParams, image: np.ndarray,
                 threshold: float = 0.5) -> np.ndarray:
    return (predict_proba(params, image) >= threshold).astype(np.uint8)


def targets_from_masks(masks: list[np.ndarray]) -> np.ndarray:
    return np.stack([check_mask(m) for m in masks])[:, None].astype(np.float64)
