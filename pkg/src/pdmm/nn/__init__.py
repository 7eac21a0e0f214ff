from .backend import BACKEND
from .layers import (
    Conv2D,
    Dense,
    Flatten,
    Layer,
    MaxPool2x2,
    ReLU,
    ShapeError,
    glorot_uniform,
    grad_check,
    run_backward,
    run_forward,
    sgd_step,
    softmax_cross_entropy,
)

__all__ = [
    "BACKEND",
    "Conv2D",
    "Dense",
    "Flatten",
    "Layer",
    "MaxPool2x2",
    "ReLU",
    "ShapeError",
    "glorot_uniform",
    "grad_check",
    "run_backward",
    "run_forward",
    "sgd_step",
    "softmax_cross_entropy",
]
