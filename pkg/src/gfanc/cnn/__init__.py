"""Lightweight 1D CNN predicting binary combination weights from a noise frame."""

from gfanc.cnn.model import (
    CnnModel,
    backward,
    bce_loss,
    build_default,
    forward,
    load_model,
    param_count,
    predict_weights,
    preprocess_minmax,
    save_model,
)
from gfanc.cnn.train import TrainConfig, evaluate, fit, train

__all__ = [
    "CnnModel",
    "TrainConfig",
    "backward",
    "bce_loss",
    "build_default",
    "evaluate",
    "fit",
    "forward",
    "load_model",
    "param_count",
    "predict_weights",
    "preprocess_minmax",
    "save_model",
    "train",
]
