"""MiniSeg: the single-frame context (SFC) segmentation network.

A four-stage conv encoder (3 -> 16 -> 32 -> 64 -> 64, stride 2 at stages
2-4) and a three-stage decoder that upsamples bilinearly and adds the
encoder feature of the same resolution before each conv
(64 -> 32 -> 16 -> C).
"""

import logging
from typing import Dict

import numpy as np

from toolsight.exceptions import ShapeError
from toolsight.networks.layers import ConvParams, ParamSet
from toolsight.tensor import Tensor, bilinear_upsample, crop, relu, softmax_channels

logger = logging.getLogger(__name__)

DOWNSAMPLE = 8
ARCH_TAG = "miniseg-v1"


class MiniSegParams(ParamSet):
    """Weights of MiniSeg."""

    ENCODER = (("enc1", 3, 16, 1), ("enc2", 16, 32, 2), ("enc3", 32, 64, 2), ("enc4", 64, 64, 2))
    DECODER = (("dec3", 64, 32), ("dec2", 32, 16), ("dec1", 16, None))

    def __init__(self, layers: Dict[str, ConvParams], num_classes: int):
        super().__init__(layers)
        self.num_classes = num_classes

    @classmethod
    def init(cls, num_classes: int, seed: int = 0) -> "MiniSegParams":
        if num_classes < 2:
            raise ShapeError(f"MiniSeg needs at least 2 classes, got {num_classes}")
        rng = np.random.default_rng(seed)
        layers = {}
        for name, cin, cout, stride in cls.ENCODER:
            layers[name] = ConvParams.he_init(rng, cin, cout, stride)
        for name, cin, cout in cls.DECODER:
            layers[name] = ConvParams.he_init(rng, cin, cout or num_classes)
        return cls(layers, num_classes)


def sfc_logits(params: MiniSegParams, frame: Tensor) -> Tensor:
    """MiniSeg logits [C, H, W] of a [3, H, W] frame with H, W divisible by 8."""
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise ShapeError(f"sfc_forward: expected a [3, H, W] frame, got {list(frame.shape)}")
    height, width = frame.shape[1:]
    if height % DOWNSAMPLE or width % DOWNSAMPLE:
        raise ShapeError(
            f"sfc_forward: frame size {height}x{width} is not divisible by {DOWNSAMPLE}; pad it first"
        )
    layers = params.layers
    skips = []
    x = frame
    for name, _, _, _ in MiniSegParams.ENCODER:
        x = relu(layers[name](x))
        skips.append(x)
    x = skips.pop()
    for name, _, _ in MiniSegParams.DECODER:
        x = bilinear_upsample(x, 2) + skips.pop()
        x = layers[name](x)
        if name != "dec1":
            x = relu(x)
    return x


def sfc_forward(params: MiniSegParams, frame: Tensor) -> Tensor:
    """
    Segment one frame.

    Args:
        params: MiniSeg weights
        frame: [3, H, W] frame in [0, 1], H and W divisible by 8

    Returns:
        [C, H, W] per-pixel class probabilities

    Raises:
        ShapeError: If the frame is not [3, H, W] or not divisible by 8
    """
    return softmax_channels(sfc_logits(params, frame))


def pad_to_multiple(frame: Tensor, multiple: int = DOWNSAMPLE) -> Tensor:
    """Replicate the bottom and right edges until both sizes divide ``multiple``."""
    height, width = frame.shape[1:]
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if not pad_h and not pad_w:
        return frame
    return Tensor(np.pad(frame.data, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge"))


def sfc_forward_any(params: MiniSegParams, frame: Tensor) -> Tensor:
    """``sfc_forward`` for frames of any size: pad by edge replication, then crop back."""
    height, width = frame.shape[1:]
    probs = sfc_forward(params, pad_to_multiple(frame))
    return crop(probs, height, width)
