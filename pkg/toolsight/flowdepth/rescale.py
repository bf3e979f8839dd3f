"""Flow resolution changes and depth normalization."""

from typing import Optional, Tuple

import numpy as np

from toolsight.exceptions import ShapeError
from toolsight.tensor import Tensor, bilinear_upsample, no_grad


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def upscale_flow(flow_low, f: int, target_size: Optional[Tuple[int, int]] = None) -> Tensor:
    """
    Bring a flow map computed at 1/f resolution to full resolution.

    Both channels are bilinearly upsampled and the displacements scaled by f.

    Args:
        flow_low: [2, H/f, W/f] flow in low-resolution pixels
        f: Integer downsample factor, at least 1
        target_size: Expected full (H, W); checked when given

    Returns:
        [2, H, W] flow in full-resolution pixels

    Raises:
        ShapeError: If f < 1 or the sizes are not related by exactly f
    """
    data = _array(flow_low)
    if f < 1:
        raise ShapeError(f"upscale_flow: factor must be >= 1, got {f}")
    if data.ndim != 3 or data.shape[0] != 2:
        raise ShapeError(f"upscale_flow: expected a [2, h, w] flow, got {list(data.shape)}")
    low_h, low_w = data.shape[1:]
    if target_size is not None and (low_h * f, low_w * f) != tuple(target_size):
        raise ShapeError(
            f"upscale_flow: {low_h}x{low_w} flow times {f} does not give "
            f"{target_size[0]}x{target_size[1]}"
        )
    if f == 1:
        return Tensor(data.copy())
    with no_grad():
        up = bilinear_upsample(Tensor(data), f)
    return Tensor(up.data * f)


def downsample_flow(flow, f: int) -> np.ndarray:
    """Area-average a full-resolution flow by f and express it in low-resolution pixels."""
    data = _array(flow)
    if f < 1:
        raise ShapeError(f"downsample_flow: factor must be >= 1, got {f}")
    _, h, w = data.shape
    if h % f or w % f:
        raise ShapeError(f"downsample_flow: {h}x{w} is not divisible by {f}")
    if f == 1:
        return data.copy()
    blocks = data.reshape(2, h // f, f, w // f, f).mean(axis=(2, 4))
    return (blocks / f).astype(data.dtype)


def normalize_depth(depth) -> Tensor:
    """Per-frame min-max normalization to [0, 1]; a constant map becomes all zeros."""
    data = _array(depth).astype(np.float32)
    low, high = float(data.min()), float(data.max())
    if not high > low:
        return Tensor(np.zeros_like(data))
    return Tensor((data - low) / (high - low))
