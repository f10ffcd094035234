"""Seeded training loop over (image, mask) pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..validation import check_gray, check_mask
from .network import NetworkParams, backward, build_net
from .optim import AdamState, adam_step


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    seed: int = 0
    depth: int = 3
    base_channels: int = 8
    dtype: str = "float32"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1/beta2 must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 required")


def train(pairs: list[tuple[np.ndarray, np.ndarray]],
          cfg: TrainConfig | None = None) -> tuple[NetworkParams, list[float]]:
    """Train from a fresh seeded initialization; fully deterministic.

    Returns the final parameters and the per-epoch mean loss curve.
    """
    cfg = cfg or TrainConfig()
    if not pairs:
        raise ValueError("empty training set")
    first = pairs[0][0].shape
    for img, mask in pairs:
        if img.shape != first or mask.shape != first:
            raise ValueError("training crops must share one size")
    dtype = np.dtype(cfg.dtype)
    images = np.stack([check_gray(img) for img, _ in pairs])[:, None].astype(dtype)
    targets = np.stack([check_mask(m) for _, m in pairs])[:, None].astype(dtype)

    params = build_net(cfg.depth, cfg.base_channels, seed=cfg.seed, dtype=dtype)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    n = images.shape[0]
    curve: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            cost, grads = backward(params, images[sel], targets[sel])
            params, state = adam_step(
                params, grads, state,
                lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
            )
            total += cost * sel.size
            seen += sel.size
        curve.append(total / seen)
    return params, curve
