"""Desk-scale encoder-decoder segmenter with hand-rolled backprop and Adam."""

from .checkpoint import load_checkpoint, save_checkpoint
from .estimator import UnetSegmenter
from .network import (
    NetworkParams,
    backward,
    build_net,
    forward,
    loss as bce_loss,
    param_count,
    predict_mask,
    predict_proba,
)
from .optim import AdamState, adam_step
from .train import TrainConfig, train

__all__ = [
    "AdamState",
    "NetworkParams",
    "TrainConfig",
    "UnetSegmenter",
    "adam_step",
    "backward",
    "bce_loss",
    "build_net",
    "forward",
    "load_checkpoint",
    "param_count",
    "predict_mask",
    "predict_proba",
    "save_checkpoint",
    "train",
]
