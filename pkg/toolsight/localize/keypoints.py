"""Keypoint extraction from segmentation maps."""

import logging
from typing import Union

import numpy as np

from toolsight.localize.blobs import connected_components
from toolsight.models.models import ClassTaxonomy, Detection, TrackResult
from toolsight.tensor import Tensor

logger = logging.getLogger(__name__)


def extract_keypoints(
    maps: Union[Tensor, np.ndarray],
    taxonomy: ClassTaxonomy,
    min_area: int = 3,
    frame_index: int = 0,
    video_id: str = "",
) -> TrackResult:
    """
    Locate keypoints as centroids of the largest blobs of each class.

    Args:
        maps: [H, W] SegMap or [C, H, W] ProbMap (argmax is taken first)
        taxonomy: Class taxonomy; ``max_instances`` bounds detections per class
        min_area: Smallest blob area in pixels that yields a detection
        frame_index: Frame index stamped on the result
        video_id: Video id stamped on the result

    Returns:
        TrackResult with detections ordered by class, larger blobs first
    """
    data = maps.data if isinstance(maps, Tensor) else np.asarray(maps)
    probs = None
    if data.ndim == 3:
        probs = data
        segmap = np.argmax(data, axis=0)
    else:
        segmap = data.astype(np.int64)

    detections = []
    for class_id in taxonomy.keypoint_class_ids:
        region = segmap == class_id
        if not region.any():
            continue
        blobs = [b for b in connected_components(region, class_id=class_id) if b.area >= min_area]
        blobs.sort(key=lambda b: (-b.area, b.first_index))
        for blob in blobs[: taxonomy.instances(class_id)]:
            x, y = blob.centroid
            confidence = 1.0
            if probs is not None:
                confidence = float(probs[class_id][blob.pixels[:, 0], blob.pixels[:, 1]].mean())
            detections.append(Detection(class_id=class_id, x=x, y=y, confidence=confidence))
    return TrackResult(video_id=video_id, frame_index=frame_index, detections=detections)
