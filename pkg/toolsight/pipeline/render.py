"""Overlay rendering: class masks, ground-truth and predicted crosses."""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image, ImageDraw

from toolsight.models.models import KeypointAnnotation, TrackResult
from toolsight.tensor import Tensor
from toolsight.utils import frame_name

logger = logging.getLogger(__name__)

GT_COLOR = (0, 255, 0)
PRED_COLOR = (255, 255, 255)
CROSS_SIZE = 7
MASK_OPACITY = 0.4

# Fixed per class index; background is never painted
PALETTE = np.array(
    [
        (0, 0, 0),
        (230, 25, 75),
        (60, 180, 75),
        (255, 225, 25),
        (0, 130, 200),
        (245, 130, 48),
        (145, 30, 180),
        (70, 240, 240),
        (240, 50, 230),
        (210, 245, 60),
        (250, 190, 212),
        (0, 128, 128),
        (220, 190, 255),
        (170, 110, 40),
        (128, 0, 0),
        (170, 255, 195),
    ],
    dtype=np.float32,
)


def _cross(draw: ImageDraw.ImageDraw, x: float, y: float, color) -> None:
    half = CROSS_SIZE // 2
    cx, cy = int(round(x)), int(round(y))
    draw.line([(cx - half, cy), (cx + half, cy)], fill=color, width=1)
    draw.line([(cx, cy - half), (cx, cy + half)], fill=color, width=1)


def render_overlay(
    frame: Union[Tensor, np.ndarray],
    segmap: Optional[np.ndarray] = None,
    prediction: Optional[TrackResult] = None,
    annotation: Optional[KeypointAnnotation] = None,
) -> Image.Image:
    """
    Draw one overlay frame.

    Args:
        frame: [3, H, W] frame in [0, 1]
        segmap: Optional [H, W] class map blended at 40% opacity
        prediction: Detections drawn as white crosses
        annotation: Visible ground truth drawn as green crosses

    Returns:
        RGB image
    """
    data = frame.data if isinstance(frame, Tensor) else np.asarray(frame)
    pixels = data.transpose(1, 2, 0).astype(np.float32) * 255.0
    if segmap is not None:
        colors = PALETTE[np.asarray(segmap) % len(PALETTE)]
        painted = (np.asarray(segmap) > 0)[..., None]
        pixels = np.where(painted, (1 - MASK_OPACITY) * pixels + MASK_OPACITY * colors, pixels)
    image = Image.fromarray(np.clip(np.rint(pixels), 0, 255).astype(np.uint8), "RGB")
    draw = ImageDraw.Draw(image)
    if annotation is not None:
        for point in annotation.keypoints:
            if point.visible:
                _cross(draw, point.x, point.y, GT_COLOR)
    if prediction is not None:
        for detection in prediction.detections:
            _cross(draw, detection.x, detection.y, PRED_COLOR)
    return image


def render_video(
    out_dir: Union[str, Path],
    frames: Sequence[Tensor],
    predictions: Sequence[Optional[TrackResult]],
    annotations: Sequence[Optional[KeypointAnnotation]],
    segmaps: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> int:
    """Write ``%06d.png`` overlays for every frame; returns the number written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for index, frame in enumerate(frames):
        segmap = segmaps[index] if segmaps is not None else None
        image = render_overlay(frame, segmap, predictions[index], annotations[index])
        image.save(out_dir / f"{frame_name(index)}.png", format="PNG")
    logger.info(f"Rendered {len(frames)} overlays to {out_dir}")
    return len(frames)
