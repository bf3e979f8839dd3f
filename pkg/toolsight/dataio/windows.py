"""Multi-frame window assembly."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from toolsight.dataio.augment import AugmentParams, jitter_frame, warp_flow, warp_frame, warp_segmap
from toolsight.dataio.masks import rasterize_masks
from toolsight.exceptions import DataValidationError, ShapeError
from toolsight.models.models import ClassTaxonomy, KeypointAnnotation, MaskSpec
from toolsight.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class ClipWindow:
    """K consecutive frames with their flows, depths and the current target.

    ``frames`` and ``depths`` run past -> current; ``flows[i]`` is the flow
    from the current frame t to frame t-(i+1).
    """

    video_id: str
    frame_index: int
    frames: List[Tensor]
    flows: List[Tensor]
    depths: List[Tensor]
    target: np.ndarray
    annotation: Optional[KeypointAnnotation] = None

    @property
    def K(self) -> int:
        return len(self.frames)

    @property
    def current(self) -> Tensor:
        return self.frames[-1]

    def validate(self) -> None:
        k = self.K
        if len(self.flows) != k - 1 or len(self.depths) != k:
            raise ShapeError(
                f"window of {k} frames has {len(self.flows)} flows and {len(self.depths)} depths"
            )
        size = self.target.shape
        for name, maps in (("frame", self.frames), ("flow", self.flows), ("depth", self.depths)):
            for m in maps:
                if m.shape[1:] != size:
                    raise ShapeError(f"{name} size {list(m.shape[1:])} != target size {list(size)}")

    def augmented(self, params: AugmentParams, taxonomy: ClassTaxonomy) -> "ClipWindow":
        """Apply one geometry to every map and jitter every frame."""
        return ClipWindow(
            video_id=self.video_id,
            frame_index=self.frame_index,
            frames=[Tensor(jitter_frame(warp_frame(f, params), params)) for f in self.frames],
            flows=[Tensor(warp_flow(f, params)) for f in self.flows],
            depths=[Tensor(warp_frame(d, params)) for d in self.depths],
            target=warp_segmap(self.target, params, taxonomy),
            annotation=self.annotation,
        )


def window_indices(t: int, K: int) -> List[int]:
    """Frame indices of the window ending at t; indices before 0 clamp to frame 0."""
    return [max(t - K + 1 + j, 0) for j in range(K)]


def build_window(
    frames: Sequence[Tensor],
    annotation: KeypointAnnotation,
    K: int,
    mask_spec: MaskSpec,
    provider=None,
) -> ClipWindow:
    if provider is None:
        from toolsight.flowdepth.providers import StaticSceneProvider

        provider = StaticSceneProvider.like(frames[0])
    t = annotation.frame_index
    if not 0 <= t < len(frames):
        raise DataValidationError(
            f"annotated frame {t} outside video of {len(frames)} frames",
            field=annotation.video_id,
        )
    height, width = frames[t].shape[1:]
    window = ClipWindow(
        video_id=annotation.video_id,
        frame_index=t,
        frames=[frames[i] for i in window_indices(t, K)],
        flows=provider.get_flows(annotation.video_id, t, K),
        depths=provider.get_depths(annotation.video_id, t, K),
        target=rasterize_masks(annotation, mask_spec, height, width),
        annotation=annotation,
    )
    window.validate()
    return window


def make_windows(
    frames: Sequence[Tensor],
    annotations: Sequence[KeypointAnnotation],
    K: int,
    mask_spec: MaskSpec,
    provider=None,
) -> List[ClipWindow]:
    """
    Build one window per annotated frame.

    Args:
        frames: Temporally ordered frames of one video, indexed by frame index
        annotations: Annotated frames of the same video
        K: Window length, at least 2
        mask_spec: Rasterization settings of the targets
        provider: Flow/depth provider; a static scene (zero flow and depth) when omitted

    Returns:
        Windows ordered like ``annotations``
    """
    if K < 2:
        raise ShapeError(f"window length K must be at least 2, got {K}")
    if len(frames) == 0:
        raise DataValidationError("video has no frames")
    return [build_window(frames, ann, K, mask_spec, provider) for ann in annotations]
