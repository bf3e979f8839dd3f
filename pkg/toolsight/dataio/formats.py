"""Image, mask, flow (.flo) and depth (.pfm) file formats."""

import io
import logging
import re
import struct
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from toolsight.exceptions import FormatError
from toolsight.tensor import Tensor
from toolsight.utils import atomic_write

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLO_MAGIC = 202021.25  # b"PIEH" read as a little-endian float32


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def read_image(path: PathLike) -> Tensor:
    """Read an 8-bit RGB PNG as a [3, H, W] tensor in [0, 1]."""
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB"), dtype=np.float32)
    except (FileNotFoundError, UnidentifiedImageError, OSError) as e:
        raise FormatError(f"cannot read image: {e}", path=str(path)) from e
    return Tensor(pixels.transpose(2, 0, 1) / 255.0)


def write_image(path: PathLike, frame) -> None:
    """Write a [3, H, W] frame in [0, 1] as an 8-bit RGB PNG."""
    data = _array(frame)
    if data.ndim != 3 or data.shape[0] != 3:
        raise FormatError(f"expected a [3, H, W] frame, got {list(data.shape)}", path=str(path))
    pixels = np.clip(np.rint(data.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(pixels, "RGB").save(buffer, format="PNG")
    atomic_write(path, buffer.getvalue())


def read_mask(path: PathLike) -> np.ndarray:
    """Read an 8-bit label PNG as an [H, W] integer SegMap."""
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("L"), dtype=np.int64)
    except (FileNotFoundError, UnidentifiedImageError, OSError) as e:
        raise FormatError(f"cannot read mask: {e}", path=str(path)) from e


def write_mask(path: PathLike, segmap: np.ndarray) -> None:
    if segmap.max(initial=0) > 255 or segmap.min(initial=0) < 0:
        raise FormatError("mask labels must fit in 8 bits", path=str(path))
    buffer = io.BytesIO()
    Image.fromarray(segmap.astype(np.uint8), "L").save(buffer, format="PNG")
    atomic_write(path, buffer.getvalue())


def read_flo(path: PathLike) -> Tensor:
    """Read a Middlebury .flo file as a [2, H, W] tensor (u, v)."""
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise FormatError("flow file not found", path=str(path)) from e
    if len(raw) < 12:
        raise FormatError("truncated .flo header", path=str(path))
    (magic,) = struct.unpack_from("<f", raw, 0)
    if magic != FLO_MAGIC:
        raise FormatError(
            f"bad .flo magic {magic!r}, expected {FLO_MAGIC} ('PIEH')", path=str(path)
        )
    width, height = struct.unpack_from("<ii", raw, 4)
    if width <= 0 or height <= 0:
        raise FormatError(f"invalid .flo size {width}x{height}", path=str(path))
    count = 2 * width * height
    if len(raw) < 12 + 4 * count:
        raise FormatError(
            f"truncated .flo payload: need {4 * count} bytes, have {len(raw) - 12}",
            path=str(path),
        )
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=12)
    return Tensor(data.reshape(height, width, 2).transpose(2, 0, 1).copy())


def write_flo(path: PathLike, flow) -> None:
    data = _array(flow)
    if data.ndim != 3 or data.shape[0] != 2:
        raise FormatError(f"expected a [2, H, W] flow, got {list(data.shape)}", path=str(path))
    _, height, width = data.shape
    header = struct.pack("<fii", FLO_MAGIC, width, height)
    payload = np.ascontiguousarray(data.transpose(1, 2, 0), dtype="<f4").tobytes()
    atomic_write(path, header + payload)


_PFM_SIZE = re.compile(rb"^(\d+)\s+(\d+)\s*$")


def read_pfm(path: PathLike) -> Tensor:
    """Read a grayscale PFM file as a [1, H, W] tensor."""
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise FormatError("depth file not found", path=str(path)) from e
    lines = raw.split(b"\n", 3)
    if len(lines) < 4:
        raise FormatError("truncated PFM header", path=str(path))
    kind, size, scale_line, payload = lines
    if kind.strip() != b"Pf":
        raise FormatError(f"bad PFM magic {kind.strip()!r}, expected b'Pf'", path=str(path))
    match = _PFM_SIZE.match(size)
    if not match:
        raise FormatError("malformed PFM size line", path=str(path))
    width, height = int(match.group(1)), int(match.group(2))
    try:
        scale = float(scale_line)
    except ValueError as e:
        raise FormatError("malformed PFM scale line", path=str(path)) from e
    endian = "<" if scale < 0 else ">"
    count = width * height
    if len(payload) < 4 * count:
        raise FormatError(
            f"truncated PFM payload: need {4 * count} bytes, have {len(payload)}",
            path=str(path),
        )
    data = np.frombuffer(payload, dtype=f"{endian}f4", count=count).reshape(height, width)
    # PFM stores rows bottom to top
    return Tensor(data[::-1][None].astype(np.float32))


def write_pfm(path: PathLike, depth) -> None:
    data = _array(depth)
    if data.ndim != 3 or data.shape[0] != 1:
        raise FormatError(f"expected a [1, H, W] map, got {list(data.shape)}", path=str(path))
    _, height, width = data.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    payload = np.ascontiguousarray(data[0][::-1], dtype="<f4").tobytes()
    atomic_write(path, header + payload)
