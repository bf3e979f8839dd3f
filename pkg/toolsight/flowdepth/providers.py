"""Optical-flow and depth providers.

Every provider answers the same two questions for a window ending at frame
t: the K-1 flows from t to its past frames and the K depth maps of the
window. Flows point from the current frame to the past frame, in
full-resolution pixels; depths are min-max normalized per frame.
"""

import logging
import threading
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from toolsight.dataio.dataset import KeypointDataset
from toolsight.dataio.formats import read_flo, read_pfm
from toolsight.dataio.windows import window_indices
from toolsight.exceptions import ProviderError, ShapeError, UsageError
from toolsight.flowdepth.rescale import normalize_depth, upscale_flow
from toolsight.models.models import ProviderConfig, SceneConfig
from toolsight.tensor import Tensor

logger = logging.getLogger(__name__)


class FlowDepthProvider:
    """Base class; subclasses supply single flow and raw depth maps."""

    def frame_size(self, video_id: str) -> Tuple[int, int]:
        raise NotImplementedError

    def flow(self, video_id: str, current: int, past: int) -> Tensor:
        raise NotImplementedError

    def depth(self, video_id: str, index: int) -> Tensor:
        raise NotImplementedError

    def check_window(self, K: int) -> None:
        """Raise if windows of length K cannot be served."""
        if K < 2:
            raise ShapeError(f"window length K must be at least 2, got {K}")

    def get_flows(self, video_id: str, t: int, K: int) -> List[Tensor]:
        """
        Flows t -> t-1, ..., t -> t-(K-1).

        Past indices below 0 clamp to frame 0; a flow whose clamped target
        is the current frame itself is the zero map.

        Args:
            video_id: Video identifier
            t: Current frame index
            K: Window length

        Returns:
            K-1 [2, H, W] flow maps
        """
        if t < 0:
            raise UsageError(f"frame index must be non-negative, got {t}")
        self.check_window(K)
        height, width = self.frame_size(video_id)
        flows = []
        for offset in range(1, K):
            past = max(t - offset, 0)
            if past == t:
                flows.append(Tensor.zeros((2, height, width)))
            else:
                flows.append(self.flow(video_id, t, past))
        return flows

    def get_depths(self, video_id: str, t: int, K: int) -> List[Tensor]:
        """Normalized depth maps of the window frames, past -> current."""
        if t < 0:
            raise UsageError(f"frame index must be non-negative, got {t}")
        self.check_window(K)
        return [normalize_depth(self.depth(video_id, index)) for index in window_indices(t, K)]


class StaticSceneProvider(FlowDepthProvider):
    """Zero flow and constant depth: every frame of a static scene."""

    def __init__(self, height: int, width: int):
        self.size = (height, width)

    @classmethod
    def like(cls, frame: Tensor) -> "StaticSceneProvider":
        return cls(*frame.shape[1:])

    def frame_size(self, video_id: str) -> Tuple[int, int]:
        return self.size

    def flow(self, video_id: str, current: int, past: int) -> Tensor:
        return Tensor.zeros((2,) + self.size)

    def depth(self, video_id: str, index: int) -> Tensor:
        return Tensor.zeros((1,) + self.size)


class FileProvider(FlowDepthProvider):
    """Reads precomputed ``.flo`` and ``.pfm`` files from a dataset root."""

    def __init__(
        self,
        dataset: Union[KeypointDataset, str, Path],
        downsample_factor: Optional[int] = None,
    ):
        self.dataset = dataset if isinstance(dataset, KeypointDataset) else KeypointDataset(dataset)
        self.downsample_factor = downsample_factor or self.dataset.flow_scale
        logger.info(
            f"Reading flow and depth files from {self.dataset.root} "
            f"(flow scale 1/{self.downsample_factor})"
        )

    def frame_size(self, video_id: str) -> Tuple[int, int]:
        return self.dataset.frame_size

    def check_window(self, K: int) -> None:
        super().check_window(K)
        stored = self.dataset.max_flow_offset
        if stored is not None and K - 1 > stored:
            raise ProviderError(
                f"window length {K} needs flows up to t-{K - 1}, dataset stores up to t-{stored}",
                path=str(self.dataset.root / KeypointDataset.MANIFEST_FILE),
            )

    def flow(self, video_id: str, current: int, past: int) -> Tensor:
        path = self.dataset.flow_path(video_id, current, past)
        if not path.exists():
            raise ProviderError(f"missing flow {current} -> {past} of {video_id}", path=str(path))
        return upscale_flow(read_flo(path), self.downsample_factor, target_size=self.frame_size(video_id))

    def depth(self, video_id: str, index: int) -> Tensor:
        path = self.dataset.depth_path(video_id, index)
        if not path.exists():
            raise ProviderError(f"missing depth of frame {index} of {video_id}", path=str(path))
        depth = read_pfm(path)
        if depth.shape[1:] != tuple(self.frame_size(video_id)):
            raise ShapeError(
                f"depth {path} is {list(depth.shape[1:])}, frames are {list(self.frame_size(video_id))}"
            )
        return depth


class SyntheticOracleProvider(FlowDepthProvider):
    """Regenerates exact flow and depth from the generator config of a synthetic dataset."""

    def __init__(self, scene: SceneConfig, clip_seeds: Dict[str, int]):
        self.scene = scene
        self.clip_seeds = dict(clip_seeds)
        self._scenes: Dict[str, object] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_dataset(cls, dataset: Union[KeypointDataset, str, Path]) -> "SyntheticOracleProvider":
        dataset = dataset if isinstance(dataset, KeypointDataset) else KeypointDataset(dataset)
        manifest = dataset.manifest
        if manifest is None or manifest.scene is None:
            raise ProviderError(
                "dataset has no generator config, the synthetic oracle needs one",
                path=str(dataset.root / KeypointDataset.MANIFEST_FILE),
            )
        return cls(manifest.scene, manifest.clip_seeds)

    def _scene(self, video_id: str):
        from toolsight.synth.scene import SyntheticScene

        with self._lock:
            if video_id not in self._scenes:
                if video_id not in self.clip_seeds:
                    raise ProviderError(f"no generator seed recorded for video {video_id}")
                self._scenes[video_id] = SyntheticScene(self.scene, self.clip_seeds[video_id])
            return self._scenes[video_id]

    def frame_size(self, video_id: str) -> Tuple[int, int]:
        return self.scene.height, self.scene.width

    def flow(self, video_id: str, current: int, past: int) -> Tensor:
        return Tensor(self._scene(video_id).flow(current, past))

    def depth(self, video_id: str, index: int) -> Tensor:
        return Tensor(self._scene(video_id).depth(index))


class ProviderFactory:
    """Factory for creating flow/depth providers."""

    @staticmethod
    def create_file_provider(root, downsample_factor: Optional[int] = None) -> FileProvider:
        """Create a provider over precomputed files."""
        return FileProvider(root, downsample_factor)

    @staticmethod
    def create_oracle_provider(root) -> SyntheticOracleProvider:
        """Create an exact provider for a synthetic dataset."""
        return SyntheticOracleProvider.from_dataset(root)

    @staticmethod
    def create_static_provider(height: int, width: int) -> StaticSceneProvider:
        """Create a zero-flow, zero-depth provider."""
        return StaticSceneProvider(height, width)

    @staticmethod
    def create(config: ProviderConfig, root=None) -> FlowDepthProvider:
        """
        Create the provider a config asks for.

        Args:
            config: Provider settings
            root: Dataset root used when ``config.root`` is not set

        Returns:
            The configured provider

        Raises:
            ProviderError: If a dataset-backed mode has no root
        """
        root = config.root or root
        if config.mode == "static":
            if root is None:
                raise ProviderError("static provider needs a dataset root to know the frame size")
            height, width = KeypointDataset(root).frame_size
            return ProviderFactory.create_static_provider(height, width)
        if root is None:
            raise ProviderError(f"provider mode '{config.mode}' needs a dataset root")
        if config.mode == "synthetic-oracle":
            return ProviderFactory.create_oracle_provider(root)
        return ProviderFactory.create_file_provider(root, config.downsample_factor)

