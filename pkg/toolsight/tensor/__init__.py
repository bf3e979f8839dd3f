"""Dense tensors with reverse-mode automatic differentiation."""

from toolsight.tensor.ops import (
    bilinear_upsample,
    concat_channels,
    conv2d,
    crop,
    grid_sample_flow,
    relu,
    softmax_channels,
)
from toolsight.tensor.optim import Adam, AdamState, ParamGroup, adam_step
from toolsight.tensor.tensor import Tape, Tensor, backward, default_dtype, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "ParamGroup",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "bilinear_upsample",
    "concat_channels",
    "conv2d",
    "crop",
    "default_dtype",
    "grid_sample_flow",
    "no_grad",
    "relu",
    "softmax_channels",
]
