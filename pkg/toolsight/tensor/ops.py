"""Differentiable image operations on [C, H, W] tensors."""

import logging
from typing import Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from toolsight.exceptions import ShapeError
from toolsight.tensor.tensor import Tensor, make_result

logger = logging.getLogger(__name__)


def _require_chw(name: str, x: Tensor) -> Tuple[int, int, int]:
    if x.ndim != 3:
        raise ShapeError(f"{name}: expected a [C, H, W] tensor, got shape {list(x.shape)}")
    return x.shape


def _im2col(padded: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int):
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride][:, :out_h, :out_w]
    cin = padded.shape[0]
    return windows.transpose(0, 3, 4, 1, 2).reshape(cin * kh * kw, out_h * out_w)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """
    2D cross-correlation with zero padding.

    Args:
        x: Input [Cin, H, W]
        weight: Kernels [Cout, Cin, kh, kw] with odd kh, kw
        bias: Bias [Cout]
        stride: Step between output samples
        pad: Zero padding on every side

    Returns:
        Output [Cout, floor((H + 2 pad - kh) / stride) + 1, ...]
    """
    cin, h, w = _require_chw("conv2d", x)
    if weight.ndim != 4:
        raise ShapeError(f"conv2d: weight must be 4-D, got shape {list(weight.shape)}")
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels but weight expects {wcin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel size {kh}x{kw} must be odd")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {list(bias.shape)} != [{cout}]")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d: invalid stride {stride} or pad {pad}")
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (w + 2 * pad - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d: {h}x{w} input too small for a {kh}x{kw} kernel")

    padded = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    w2 = weight.data.reshape(cout, -1)
    cols = _im2col(padded, kh, kw, stride, out_h, out_w)
    out = (w2 @ cols + bias.data[:, None]).reshape(cout, out_h, out_w)

    def grad(g: np.ndarray):
        g2 = g.reshape(cout, -1)
        cols_again = _im2col(padded, kh, kw, stride, out_h, out_w)
        dweight = (g2 @ cols_again.T).reshape(weight.shape)
        dbias = g2.sum(axis=1)
        dcols = (w2.T @ g2).reshape(cin, kh, kw, out_h, out_w)
        dpadded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                dpadded[
                    :,
                    i : i + stride * (out_h - 1) + 1 : stride,
                    j : j + stride * (out_w - 1) + 1 : stride,
                ] += dcols[:, i, j]
        return dpadded[:, pad : pad + h, pad : pad + w], dweight, dbias

    return make_result("conv2d", out, (x, weight, bias), grad)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(x, 0); the subgradient at 0 is 0."""
    mask = x.data > 0
    return make_result("relu", x.data * mask, (x,), lambda g: (g * mask,))


def softmax_channels(x: Tensor) -> Tensor:
    """Per-pixel softmax over the channel axis of a [C, H, W] tensor."""
    c, _, _ = _require_chw("softmax_channels", x)
    if c < 2:
        raise ShapeError(f"softmax_channels: need at least 2 channels, got {c}")
    shifted = x.data - x.data.max(axis=0, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=0, keepdims=True)

    def grad(g: np.ndarray):
        return (probs * (g - (g * probs).sum(axis=0, keepdims=True)),)

    return make_result("softmax", probs, (x,), grad)


def _interp_matrix(n: int, factor: int, dtype) -> np.ndarray:
    """Rows hold align-corners-false bilinear weights of each output sample."""
    size = n * factor
    src = np.clip((np.arange(size) + 0.5) / factor - 0.5, 0.0, None)
    lo = np.minimum(np.floor(src).astype(np.int64), n - 1)
    hi = np.minimum(lo + 1, n - 1)
    frac = src - lo
    matrix = np.zeros((size, n), dtype=np.float64)
    rows = np.arange(size)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix.astype(dtype)


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    """Bilinear upsampling by an integer factor (align_corners=False)."""
    _, h, w = _require_chw("bilinear_upsample", x)
    if factor < 1:
        raise ShapeError(f"bilinear_upsample: factor must be >= 1, got {factor}")
    rows = _interp_matrix(h, factor, x.data.dtype)
    cols = _interp_matrix(w, factor, x.data.dtype)
    out = rows @ x.data @ cols.T
    return make_result("upsample", out, (x,), lambda g: (rows.T @ g @ cols,))


def grid_sample_flow(x: Tensor, flow: Union[Tensor, np.ndarray]) -> Tensor:
    """
    Backward-warp ``x`` by a pixel displacement field.

    output(x, y) samples ``x`` bilinearly at (x + u(x, y), y + v(x, y)) with
    coordinates clamped to the border. The flow is treated as a constant.
    """
    c, h, w = _require_chw("grid_sample_flow", x)
    flow_data = flow.data if isinstance(flow, Tensor) else np.asarray(flow)
    if flow_data.shape != (2, h, w):
        raise ShapeError(
            f"grid_sample_flow: flow shape {list(flow_data.shape)} != [2, {h}, {w}]"
        )
    dtype = x.data.dtype
    gy, gx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    sx = np.clip(gx + flow_data[0].astype(np.float64), 0, w - 1)
    sy = np.clip(gy + flow_data[1].astype(np.float64), 0, h - 1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (sx - x0).astype(dtype)
    wy = (sy - y0).astype(dtype)

    corners = [
        (y0 * w + x0, (1 - wy) * (1 - wx)),
        (y0 * w + x1, (1 - wy) * wx),
        (y1 * w + x0, wy * (1 - wx)),
        (y1 * w + x1, wy * wx),
    ]
    flat = x.data.reshape(c, h * w)
    out = np.zeros((c, h * w), dtype=dtype)
    for index, weight in corners:
        out += flat[:, index.ravel()] * weight.ravel()

    def grad(g: np.ndarray):
        g2 = g.reshape(c, h * w)
        dx = np.zeros((c, h * w), dtype=np.float64)
        for index, weight in corners:
            for channel in range(c):
                dx[channel] += np.bincount(
                    index.ravel(), weights=g2[channel] * weight.ravel(), minlength=h * w
                )
        return (dx.reshape(c, h, w).astype(dtype),)

    return make_result("grid_sample", out.reshape(c, h, w), (x,), grad)


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate [Ci, H, W] tensors along the channel axis."""
    if not tensors:
        raise ShapeError("concat_channels: nothing to concatenate")
    spatial = {t.shape[1:] for t in tensors if t.ndim == 3}
    if len(spatial) != 1 or any(t.ndim != 3 for t in tensors):
        raise ShapeError(
            f"concat_channels: incompatible shapes {[list(t.shape) for t in tensors]}"
        )
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])
    out = np.concatenate([t.data for t in tensors], axis=0)

    def grad(g: np.ndarray):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    return make_result("concat", out, tuple(tensors), grad)


def crop(x: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left ``height`` x ``width`` window of a [C, H, W] tensor."""
    _, h, w = _require_chw("crop", x)
    if height > h or width > w:
        raise ShapeError(f"crop: {height}x{width} larger than {h}x{w}")
    if (height, width) == (h, w):
        return x

    def grad(g: np.ndarray):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[:, :height, :width] = g
        return (full,)

    return make_result("crop", x.data[:, :height, :width], (x,), grad)
