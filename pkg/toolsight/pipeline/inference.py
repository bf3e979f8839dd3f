"""Batch inference: segmentation, then blob-centroid localization."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from toolsight import config
from toolsight.dataio.windows import window_indices
from toolsight.exceptions import ProviderError
from toolsight.flowdepth.providers import FlowDepthProvider
from toolsight.localize.keypoints import extract_keypoints
from toolsight.models.models import TrackResult
from toolsight.networks.checkpoint import Checkpoint
from toolsight.networks.mfcnet import assemble_mfc_input, mfc_net_forward
from toolsight.networks.miniseg import sfc_forward_any
from toolsight.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class InferenceRun:
    results: List[TrackResult] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def fps(self) -> float:
        return len(self.results) / self.seconds if self.seconds > 0 else float("inf")


class KeypointTracker:
    """
    Runs a checkpoint over the frames of a video.

    SFC checkpoints segment every frame on its own. MFC checkpoints segment
    every frame once, then fuse the K-frame window ending at each frame with
    flows and depths from the provider.
    """

    def __init__(
        self,
        checkpoint: Checkpoint,
        provider: Optional[FlowDepthProvider] = None,
        min_area: int = 3,
        num_workers: Optional[int] = None,
    ):
        self.checkpoint = checkpoint
        self.provider = provider
        self.min_area = min_area
        self.num_workers = num_workers or config.NUM_WORKERS
        if checkpoint.mfc is not None and provider is None:
            raise ProviderError("an MFC checkpoint needs a flow/depth provider")

    def _map(self, fn, items):
        with ThreadPoolExecutor(max_workers=self.num_workers) as executor:
            return list(executor.map(fn, items))

    def probmaps(self, frames: Sequence[Tensor], video_id: str) -> List[Tensor]:
        """Final probability map of every frame."""

        def segment(frame: Tensor) -> Tensor:
            with no_grad():
                return sfc_forward_any(self.checkpoint.sfc, frame)

        sfc_maps = self._map(segment, frames)
        if self.checkpoint.mfc is None:
            return sfc_maps
        cfg = self.checkpoint.mfc.cfg
        self.provider.check_window(cfg.K)

        def fuse(t: int) -> Tensor:
            with no_grad():
                x = assemble_mfc_input(
                    [sfc_maps[i] for i in window_indices(t, cfg.K)],
                    self.provider.get_flows(video_id, t, cfg.K),
                    self.provider.get_depths(video_id, t, cfg.K),
                    cfg,
                )
                return mfc_net_forward(self.checkpoint.mfc, x)

        return self._map(fuse, range(len(frames)))

    def localize(
        self,
        probmaps: Sequence[Tensor],
        video_id: str,
        frame_indices: Optional[Sequence[int]] = None,
    ) -> List[TrackResult]:
        """Turn probability (or one-hot) maps into TrackResults."""
        indices = list(frame_indices) if frame_indices is not None else range(len(probmaps))
        taxonomy = self.checkpoint.taxonomy
        return [
            extract_keypoints(probs, taxonomy, self.min_area, frame_index=index, video_id=video_id)
            for index, probs in zip(indices, probmaps)
        ]

    def track(self, frames: Sequence[Tensor], video_id: str) -> InferenceRun:
        started = time.perf_counter()
        results = self.localize(self.probmaps(frames, video_id), video_id)
        run = InferenceRun(results=results, seconds=time.perf_counter() - started)
        logger.info(f"Tracked {len(results)} frames of {video_id} at {run.fps:.1f} frames/s")
        return run


def infer(
    checkpoint: Checkpoint,
    videos: Dict[str, Sequence[Tensor]],
    provider: Optional[FlowDepthProvider] = None,
    min_area: int = 3,
) -> InferenceRun:
    """
    Track keypoints in every frame of every video.

    Args:
        checkpoint: SFC or MFC checkpoint
        videos: Frames per video id, in temporal order
        provider: Flow/depth source, required for MFC checkpoints
        min_area: Smallest blob that yields a detection

    Returns:
        InferenceRun with one TrackResult per frame and the throughput

    Raises:
        ProviderError: If an MFC checkpoint lacks flows or depths
    """
    tracker = KeypointTracker(checkpoint, provider, min_area)
    total = InferenceRun()
    for video_id, frames in videos.items():
        run = tracker.track(frames, video_id)
        total.results.extend(run.results)
        total.seconds += run.seconds
    return total
