"""MFCNet: multi-frame context fusion on top of MiniSeg.

Variant B concatenates the K probability maps with the normalized flows and
the depths. Variant W first warps every past probability map and depth to
the current frame with its flow and concatenates the aligned maps.
"""

import logging
from typing import Dict, List, Sequence

import numpy as np

from toolsight.exceptions import ShapeError
from toolsight.models.models import MfcConfig
from toolsight.networks.layers import ConvParams, ParamSet
from toolsight.networks.miniseg import MiniSegParams, sfc_forward_any
from toolsight.tensor import Tensor, concat_channels, grid_sample_flow, no_grad, softmax_channels

logger = logging.getLogger(__name__)

WIDTH = 64


class MfcNetParams(ParamSet):
    """Four 3x3 conv layers: in -> 64 -> 64 -> 64 -> C."""

    NAMES = ("conv1", "conv2", "conv3", "conv4")

    def __init__(self, layers: Dict[str, ConvParams], cfg: MfcConfig):
        super().__init__(layers)
        self.cfg = cfg

    @classmethod
    def init(cls, cfg: MfcConfig, seed: int = 0) -> "MfcNetParams":
        rng = np.random.default_rng(seed)
        widths = [cfg.input_channels, WIDTH, WIDTH, WIDTH, cfg.num_classes]
        layers = {
            name: ConvParams.he_init(rng, widths[i], widths[i + 1]) for i, name in enumerate(cls.NAMES)
        }
        return cls(layers, cfg)


def normalized_flow(flow: Tensor) -> Tensor:
    """Flow channels divided by (W, H)."""
    _, height, width = flow.shape
    scale = np.array([width, height], dtype=flow.data.dtype).reshape(2, 1, 1)
    return Tensor(flow.data / scale)


def assemble_mfc_input(
    probmaps: Sequence[Tensor],
    flows: Sequence[Tensor],
    depths: Sequence[Tensor],
    cfg: MfcConfig,
) -> Tensor:
    """
    Build the MFCNet input of one window.

    Args:
        probmaps: K SFC probability maps, past -> current
        flows: K-1 flows; ``flows[i]`` maps the current frame to frame t-(i+1)
        depths: K depth maps, past -> current
        cfg: Window length, variant and depth usage

    Returns:
        [cfg.input_channels, H, W] tensor

    Raises:
        ShapeError: If counts or shapes disagree with the config
    """
    K = cfg.K
    if len(probmaps) != K or len(flows) != K - 1 or len(depths) != K:
        raise ShapeError(
            f"MFC input needs {K} probmaps, {K - 1} flows and {K} depths, got "
            f"{len(probmaps)}, {len(flows)} and {len(depths)}"
        )
    for probs in probmaps:
        if probs.shape[0] != cfg.num_classes:
            raise ShapeError(f"probmap has {probs.shape[0]} channels, config expects {cfg.num_classes}")

    if cfg.variant == "W":
        aligned = list(probmaps)
        aligned_depths = list(depths)
        # probmaps[j] is frame t-(K-1-j), aligned by flows[K-2-j]
        for j in range(K - 1):
            flow = flows[K - 2 - j]
            aligned[j] = grid_sample_flow(probmaps[j], flow)
            aligned_depths[j] = grid_sample_flow(depths[j], flow)
        parts: List[Tensor] = aligned + (aligned_depths if cfg.use_depth else [])
    else:
        parts = list(probmaps) + [normalized_flow(f) for f in flows]
        if cfg.use_depth:
            parts += list(depths)
    return concat_channels(parts)


def mfc_net_forward(net: MfcNetParams, x: Tensor) -> Tensor:
    layers = [net.layers[name] for name in MfcNetParams.NAMES]
    return softmax_channels(ParamSet.relu_stack(x, layers))


def window_probmaps(sfc: MiniSegParams, frames: Sequence[Tensor], train_sfc: bool = True) -> List[Tensor]:
    """SFC probabilities of each window frame; repeated (clamped) frames are segmented once."""
    probmaps: List[Tensor] = []
    for j, frame in enumerate(frames):
        if j > 0 and frame is frames[j - 1]:
            probmaps.append(probmaps[-1])
        elif train_sfc:
            probmaps.append(sfc_forward_any(sfc, frame))
        else:
            with no_grad():
                probmaps.append(sfc_forward_any(sfc, frame))
    return probmaps


def mfc_forward(sfc: MiniSegParams, net: MfcNetParams, window, cfg: MfcConfig, train_sfc: bool = True) -> Tensor:
    """
    Refine the current frame's segmentation with K frames of context.

    Args:
        sfc: MiniSeg weights
        net: MFCNet weights
        window: ClipWindow with K frames, K-1 flows and K depths
        cfg: MFC configuration
        train_sfc: Record the SFC forward passes for backpropagation

    Returns:
        [C, H, W] probability map of the current frame
    """
    if window.K != cfg.K:
        raise ShapeError(f"window has {window.K} frames, config expects K={cfg.K}")
    probmaps = window_probmaps(sfc, window.frames, train_sfc)
    x = assemble_mfc_input(probmaps, window.flows, window.depths, cfg)
    return mfc_net_forward(net, x)
