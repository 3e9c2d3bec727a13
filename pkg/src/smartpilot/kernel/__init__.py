"""Minimal differentiable computation engine (dense + LSTM, desk scale)."""

from .losses import Composite, CrossEntropy, Mse, Wmse
from .model import (
    DimensionError,
    InputError,
    LayerSpec,
    ModelParams,
    NumericError,
    Tensor,
    TrainConfig,
    build_model,
    forward,
    gradients,
    load_checkpoint,
    loss_value,
    save_checkpoint,
    train,
)
from .optim import Adam, Sgd

__all__ = [
    "Adam",
    "Composite",
    "CrossEntropy",
    "DimensionError",
    "InputError",
    "LayerSpec",
    "ModelParams",
    "Mse",
    "NumericError",
    "Sgd",
    "Tensor",
    "TrainConfig",
    "Wmse",
    "build_model",
    "forward",
    "gradients",
    "load_checkpoint",
    "loss_value",
    "save_checkpoint",
    "train",
]
