import os
from pathlib import Path
from typing import Optional, Tuple, Union


def frame_name(index: int) -> str:
    """
    Generate the standard file stem of a frame.

    Args:
        index: Frame index within its video

    Returns:
        Zero-padded frame stem, e.g. ``000012``
    """
    return f"{index:06d}"


def flow_name(current: int, past: int) -> str:
    """
    Generate the file name of a current -> past flow map.

    Args:
        current: Index of the current frame
        past: Index of the past frame

    Returns:
        File name such as ``000010_to_000008.flo``
    """
    return f"{frame_name(current)}_to_{frame_name(past)}.flo"


def default_tau(frame_size: Optional[Tuple[int, int]]) -> float:
    """
    Default match threshold: 20 px at 576-row resolution, scaled by min(H, W).

    Args:
        frame_size: (height, width) of the evaluated frames

    Returns:
        Threshold in pixels
    """
    if frame_size is None:
        return 20.0
    return 20.0 * min(frame_size) / 576.0


def atomic_write(path: Union[str, Path], payload: bytes) -> None:
    """
    Write bytes to a sibling temp file and rename it into place.

    Readers never see a partially written file, and parent directories are
    created as needed.

    Args:
        path: Destination file
        payload: Complete file contents
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
