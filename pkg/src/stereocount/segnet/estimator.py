"""Scikit-learn style wrapper around the segmentation network."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .checkpoint import load_checkpoint, save_checkpoint
from .network import predict_mask, predict_proba
from .train import TrainConfig, train


class UnetSegmenter(BaseEstimator):
    """Trainable cell segmenter: fit on (image, mask) pairs, predict masks.

    Defaults follow the reference training recipe (Adam, lr 1e-4,
    beta1 0.9, beta2 0.999, 100 epochs); depth/base are desk-scale.
    """

    def __init__(self, depth=3, base_channels=8, epochs=100, lr=1e-4,
                 beta1=0.9, beta2=0.999, eps=1e-8, batch_size=4,
                 threshold=0.5, seed=0, dtype="float32"):
        self.depth = depth
        self.base_channels = base_channels
        self.epochs = epochs
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.batch_size = batch_size
        self.threshold = threshold
        self.seed = seed
        self.dtype = dtype

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, beta1=self.beta1, beta2=self.beta2,
            eps=self.eps, batch_size=self.batch_size, seed=self.seed,
            depth=self.depth, base_channels=self.base_channels, dtype=self.dtype,
        )

    def fit(self, X, y) -> "UnetSegmenter":
        pairs = list(zip(X, y))
        self.params_, self.loss_curve_ = train(pairs, self._config())
        return self

    def predict_proba(self, image: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return predict_proba(self.params_, image)

    def predict(self, image: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return predict_mask(self.params_, image, self.threshold)

    def save(self, path) -> str:
        self._check_fitted()
        return save_checkpoint(path, self.params_)

    @classmethod
    def from_checkpoint(cls, path, **kwargs) -> "UnetSegmenter":
        params = load_checkpoint(path)
        est = cls(depth=params.depth, base_channels=params.base_channels, **kwargs)
        est.params_ = params
        est.loss_curve_ = []
        return est

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise ValueError("segmenter is not fitted")
