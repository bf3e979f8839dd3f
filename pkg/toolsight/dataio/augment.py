"""Seeded joint augmentation of frames, masks, flows and depths.

Geometry (horizontal flip, then crop-and-resize about the image center) is
applied identically to every map; brightness/contrast jitter touches frames
only. Flow vectors are transformed with the geometry: u is negated by the
flip and both components scale with the zoom.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from toolsight.models.models import ClassTaxonomy, Keypoint, KeypointAnnotation
from toolsight.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentParams:
    """One draw of augmentation parameters."""

    flip: bool = False
    scale: float = 1.0
    shift: Tuple[float, float] = (0.0, 0.0)
    contrast: float = 1.0
    brightness: float = 0.0

    @classmethod
    def draw(cls, seed: int, height: int, width: int) -> "AugmentParams":
        rng = np.random.default_rng(seed)
        return cls(
            flip=bool(rng.random() < 0.5),
            scale=float(rng.uniform(0.9, 1.1)),
            shift=(
                float(rng.uniform(-0.05, 0.05) * width),
                float(rng.uniform(-0.05, 0.05) * height),
            ),
            contrast=float(rng.uniform(0.9, 1.1)),
            brightness=float(rng.uniform(-0.1, 0.1)),
        )

    @property
    def is_identity_geometry(self) -> bool:
        return not self.flip and self.scale == 1.0 and self.shift == (0.0, 0.0)

    def source_grid(self, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
        """Input coordinates sampled by every output pixel."""
        gy, gx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
        cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
        sx = (gx - cx) / self.scale + cx + self.shift[0]
        sy = (gy - cy) / self.scale + cy + self.shift[1]
        if self.flip:
            sx = (width - 1) - sx
        return sx, sy

    def map_point(self, x: float, y: float, height: int, width: int) -> Tuple[float, float]:
        """Where an input point lands in the augmented frame."""
        cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
        if self.flip:
            x = (width - 1) - x
        return (
            (x - cx - self.shift[0]) * self.scale + cx,
            (y - cy - self.shift[1]) * self.scale + cy,
        )


@dataclass
class AugmentedSample:
    frame: np.ndarray
    segmap: np.ndarray
    flows: List[np.ndarray] = field(default_factory=list)
    depths: List[np.ndarray] = field(default_factory=list)
    params: AugmentParams = field(default_factory=AugmentParams)


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _sample_bilinear(data: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    _, h, w = data.shape
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = sx - x0
    wy = sy - y0
    top = data[:, y0, x0] * (1 - wx) + data[:, y0, x1] * wx
    bottom = data[:, y1, x0] * (1 - wx) + data[:, y1, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(data.dtype)


def _sample_nearest(segmap: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = segmap.shape
    xi = np.clip(np.rint(sx).astype(np.int64), 0, w - 1)
    yi = np.clip(np.rint(sy).astype(np.int64), 0, h - 1)
    return segmap[yi, xi]


def warp_frame(frame, params: AugmentParams) -> np.ndarray:
    data = _array(frame)
    if params.is_identity_geometry:
        return data.copy()
    sx, sy = params.source_grid(*data.shape[1:])
    return _sample_bilinear(data, sx, sy)


def warp_segmap(segmap: np.ndarray, params: AugmentParams, taxonomy: ClassTaxonomy) -> np.ndarray:
    if params.is_identity_geometry:
        return segmap.copy()
    sx, sy = params.source_grid(*segmap.shape)
    out = _sample_nearest(segmap, sx, sy)
    if params.flip:
        out = np.asarray(taxonomy.flip_permutation(), dtype=segmap.dtype)[out]
    return out


def warp_flow(flow, params: AugmentParams) -> np.ndarray:
    out = warp_frame(flow, params)
    if params.flip:
        out[0] = -out[0]
    if params.scale != 1.0:
        out *= params.scale
    return out


def jitter_frame(frame: np.ndarray, params: AugmentParams) -> np.ndarray:
    if params.contrast == 1.0 and params.brightness == 0.0:
        return frame
    jittered = (frame - 0.5) * params.contrast + 0.5 + params.brightness
    return np.clip(jittered, 0.0, 1.0).astype(frame.dtype)


def augment_annotation(
    ann: KeypointAnnotation,
    params: AugmentParams,
    taxonomy: ClassTaxonomy,
    height: int,
    width: int,
) -> KeypointAnnotation:
    """Transform keypoints with the same geometry as the maps."""
    mapping = taxonomy.flip_permutation() if params.flip else None
    keypoints = []
    for point in ann.keypoints:
        x, y = params.map_point(point.x, point.y, height, width)
        visible = point.visible and 0 <= x < width and 0 <= y < height
        class_id = mapping[point.class_id] if mapping else point.class_id
        keypoints.append(Keypoint(class_id=class_id, x=x, y=y, visible=visible))
    return KeypointAnnotation(video_id=ann.video_id, frame_index=ann.frame_index, keypoints=keypoints)


def augment(
    frame,
    segmap: np.ndarray,
    flows: Optional[Sequence] = None,
    depths: Optional[Sequence] = None,
    seed: int = 0,
    taxonomy: Optional[ClassTaxonomy] = None,
    params: Optional[AugmentParams] = None,
) -> AugmentedSample:
    """
    Augment a frame and its aligned maps with one seeded draw.

    Args:
        frame: [3, H, W] frame in [0, 1]
        segmap: [H, W] target labels
        flows: Optional [2, H, W] flow maps
        depths: Optional [1, H, W] depth maps
        seed: Seed of the parameter draw
        taxonomy: Taxonomy used to swap left/right classes on flips
        params: Explicit parameters; overrides ``seed``

    Returns:
        AugmentedSample with the transformed arrays and the parameters used
    """
    data = _array(frame)
    height, width = data.shape[1:]
    params = params or AugmentParams.draw(seed, height, width)
    taxonomy = taxonomy or ClassTaxonomy.endovis()
    return AugmentedSample(
        frame=jitter_frame(warp_frame(data, params), params),
        segmap=warp_segmap(segmap, params, taxonomy),
        flows=[warp_flow(f, params) for f in flows or []],
        depths=[warp_frame(d, params) for d in depths or []],
        params=params,
    )
