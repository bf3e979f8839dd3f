"""On-disk dataset layout.

    <root>/taxonomy.json
    <root>/dataset.json                      (optional manifest)
    <root>/annotations/<vid>.json
    <root>/videos/<vid>/frames/%06d.png
    <root>/videos/<vid>/flow/%06d_to_%06d.flo
    <root>/videos/<vid>/depth/%06d.pfm
    <root>/videos/<vid>/masks/%06d.png       (written by prepare)
"""

import json
import logging
import threading
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from toolsight.dataio.annotations import load_annotations, load_taxonomy
from toolsight.dataio.formats import read_image
from toolsight.exceptions import DataValidationError
from toolsight.models.models import ClassTaxonomy, DatasetManifest, KeypointAnnotation
from toolsight.tensor import Tensor
from toolsight.utils import atomic_write, flow_name, frame_name

logger = logging.getLogger(__name__)


class KeypointDataset:
    """Read access to a dataset laid out as above."""

    TAXONOMY_FILE = "taxonomy.json"
    MANIFEST_FILE = "dataset.json"

    def __init__(self, root: Union[str, Path]):
        """Open a dataset root.

        Args:
            root: Dataset directory

        Raises:
            DataValidationError: If the taxonomy is missing or invalid
        """
        self.root = Path(root)
        if not self.root.is_dir():
            raise DataValidationError("dataset directory not found", path=str(self.root))
        self.taxonomy: ClassTaxonomy = load_taxonomy(self.root / self.TAXONOMY_FILE)
        self.manifest: Optional[DatasetManifest] = self._load_manifest()
        self._frames: Dict[str, List[Tensor]] = {}
        self._annotations: Dict[str, List[KeypointAnnotation]] = {}
        self._lock = threading.RLock()

    def _load_manifest(self) -> Optional[DatasetManifest]:
        path = self.root / self.MANIFEST_FILE
        if not path.exists():
            return None
        try:
            return DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise DataValidationError("invalid dataset manifest", path=str(path), detail=str(e)) from e

    @property
    def videos(self) -> List[str]:
        return sorted(p.stem for p in (self.root / "annotations").glob("*.json"))

    @cached_property
    def frame_size(self) -> Tuple[int, int]:
        if self.manifest:
            return self.manifest.height, self.manifest.width
        for video in self.videos:
            indices = self.frame_indices(video)
            if indices:
                return tuple(read_image(self.frame_path(video, indices[0])).shape[1:])
        raise DataValidationError("dataset has no frames", path=str(self.root))

    @property
    def flow_scale(self) -> int:
        return self.manifest.flow_scale if self.manifest else 1

    @property
    def max_flow_offset(self) -> Optional[int]:
        return self.manifest.max_flow_offset if self.manifest else None

    def video_dir(self, video_id: str) -> Path:
        return self.root / "videos" / video_id

    def annotation_path(self, video_id: str) -> Path:
        return self.root / "annotations" / f"{video_id}.json"

    def frame_path(self, video_id: str, index: int) -> Path:
        return self.video_dir(video_id) / "frames" / f"{frame_name(index)}.png"

    def flow_path(self, video_id: str, current: int, past: int) -> Path:
        return self.video_dir(video_id) / "flow" / flow_name(current, past)

    def depth_path(self, video_id: str, index: int) -> Path:
        return self.video_dir(video_id) / "depth" / f"{frame_name(index)}.pfm"

    def mask_path(self, video_id: str, index: int) -> Path:
        return self.video_dir(video_id) / "masks" / f"{frame_name(index)}.png"

    def frame_indices(self, video_id: str) -> List[int]:
        frames_dir = self.video_dir(video_id) / "frames"
        return sorted(int(p.stem) for p in frames_dir.glob("*.png") if p.stem.isdigit())

    def annotations(self, video_id: str) -> List[KeypointAnnotation]:
        with self._lock:
            if video_id not in self._annotations:
                self._annotations[video_id] = load_annotations(
                    self.annotation_path(video_id), self.taxonomy, self.frame_size
                )
            return self._annotations[video_id]

    def frames(self, video_id: str) -> List[Tensor]:
        """All frames of a video, loaded once and kept in memory."""
        with self._lock:
            if video_id not in self._frames:
                self._frames[video_id] = self._load_frames(video_id)
            return self._frames[video_id]

    def _load_frames(self, video_id: str) -> List[Tensor]:
        indices = self.frame_indices(video_id)
        if not indices:
            raise DataValidationError(f"video {video_id} has no frames", path=str(self.video_dir(video_id)))
        if indices != list(range(len(indices))):
            raise DataValidationError(
                f"video {video_id} frames are not numbered 0..{len(indices) - 1}",
                path=str(self.video_dir(video_id) / "frames"),
            )
        logger.debug(f"Loading {len(indices)} frames of {video_id}")
        return [read_image(self.frame_path(video_id, i)) for i in indices]

    def split(self, val_fraction: float, seed: int) -> Tuple[List[str], List[str]]:
        """Hold out a seeded share of videos for validation (none if only one video)."""
        videos = self.videos
        count = int(round(val_fraction * len(videos)))
        if val_fraction > 0 and len(videos) > 1:
            count = max(count, 1)
        count = min(count, len(videos) - 1) if videos else 0
        order = np.random.default_rng(seed).permutation(len(videos))
        held_out = sorted(videos[i] for i in order[:count])
        return [v for v in videos if v not in held_out], held_out


def write_manifest(root: Union[str, Path], manifest: DatasetManifest) -> None:
    payload = json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True)
    atomic_write(Path(root) / KeypointDataset.MANIFEST_FILE, (payload + "\n").encode("utf-8"))
