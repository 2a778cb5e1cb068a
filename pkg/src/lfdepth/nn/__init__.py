"""From-scratch differentiable kernels and their optimizer."""

from .layers import (
    BatchNorm,
    Conv2x2,
    ReLU,
    concat_channels,
    he_uniform_limit,
    mae_loss,
    split_channels,
)
from .optim import RmsProp, rmsprop_step, schedule_lr
from .gradcheck import run_suite

__all__ = [
    "BatchNorm",
    "Conv2x2",
    "ReLU",
    "RmsProp",
    "concat_channels",
    "he_uniform_limit",
    "mae_loss",
    "rmsprop_step",
    "run_suite",
    "schedule_lr",
    "split_channels",
]
