"""TSR tensor file format.

Layout: magic ``TSR1``, u32 LE ndim, ndim x u32 LE dims, row-major f32 LE payload.
"""

import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from toolsight.exceptions import FormatError

TSR_MAGIC = b"TSR1"


def encode_tsr(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    header = TSR_MAGIC + struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape)
    return header + np.ascontiguousarray(array, dtype="<f4").tobytes()


def decode_tsr(buffer: bytes, offset: int = 0, source: str = "<bytes>") -> Tuple[np.ndarray, int]:
    """
    Decode one TSR block.

    Args:
        buffer: Bytes holding the block
        offset: Position of the magic bytes
        source: Name used in error messages

    Returns:
        Tuple of (float32 array, offset just past the block)
    """
    if buffer[offset : offset + 4] != TSR_MAGIC:
        raise FormatError(f"bad magic, expected {TSR_MAGIC!r}", path=source)
    try:
        (ndim,) = struct.unpack_from("<I", buffer, offset + 4)
        dims = struct.unpack_from(f"<{ndim}I", buffer, offset + 8)
    except struct.error as e:
        raise FormatError(f"truncated TSR header: {e}", path=source) from e
    start = offset + 8 + 4 * ndim
    count = int(np.prod(dims, dtype=np.int64))
    end = start + 4 * count
    if end > len(buffer):
        raise FormatError(
            f"truncated TSR payload: need {4 * count} bytes, have {len(buffer) - start}",
            path=source,
        )
    array = np.frombuffer(buffer, dtype="<f4", count=count, offset=start)
    return array.astype(np.float32).reshape(dims), end


def write_tsr(path: Union[str, Path], array: np.ndarray) -> None:
    Path(path).write_bytes(encode_tsr(array))


def read_tsr(path: Union[str, Path]) -> np.ndarray:
    array, _ = decode_tsr(Path(path).read_bytes(), source=str(path))
    return array
