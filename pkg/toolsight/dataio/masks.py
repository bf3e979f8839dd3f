"""Keypoint-ROI mask rasterization."""

import math

import numpy as np

from toolsight.models.models import KeypointAnnotation, MaskSpec


def rasterize_masks(ann: KeypointAnnotation, spec: MaskSpec, height: int, width: int) -> np.ndarray:
    """
    Rasterize disks of radius r_d around every visible keypoint.

    Pixel (px, py) takes class c when its center lies within r_d of keypoint c.
    Where disks overlap, the higher class id wins.

    Args:
        ann: Annotation of one frame
        spec: Radius and taxonomy
        height: Frame height
        width: Frame width

    Returns:
        [H, W] int64 SegMap with background 0
    """
    segmap = np.zeros((height, width), dtype=np.int64)
    radius = spec.radius
    for point in sorted(ann.keypoints, key=lambda k: k.class_id):
        if not point.visible:
            continue
        x0 = max(int(math.floor(point.x - radius)), 0)
        x1 = min(int(math.ceil(point.x + radius)), width - 1)
        y0 = max(int(math.floor(point.y - radius)), 0)
        y1 = min(int(math.ceil(point.y + radius)), height - 1)
        if x0 > x1 or y0 > y1:
            continue
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        inside = (xs - point.x) ** 2 + (ys - point.y) ** 2 <= radius * radius
        segmap[y0 : y1 + 1, x0 : x1 + 1][inside] = point.class_id
    return segmap
