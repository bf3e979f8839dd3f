"""Dataset validation and target-mask rasterization."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from toolsight import config
from toolsight.dataio.dataset import KeypointDataset
from toolsight.dataio.formats import write_mask
from toolsight.dataio.masks import rasterize_masks
from toolsight.exceptions import DataValidationError
from toolsight.models.models import MaskSpec

logger = logging.getLogger(__name__)


@dataclass
class PrepareSummary:
    videos: int
    frames: int
    annotated_frames: int
    masks_written: int


def prepare_dataset(
    dataset: KeypointDataset,
    mask_radius: float = 5.0,
    num_workers: Optional[int] = None,
) -> PrepareSummary:
    """
    Validate every video and write its target masks.

    Args:
        dataset: Dataset to check
        mask_radius: ROI radius r_d of the masks
        num_workers: Parallel mask writers (default from config)

    Returns:
        Counts of what was validated and written

    Raises:
        DataValidationError: On the first invalid annotation, missing frame or
            annotation of a frame that does not exist
    """
    spec = MaskSpec(radius=mask_radius, taxonomy=dataset.taxonomy)
    videos = dataset.videos
    if not videos:
        raise DataValidationError("dataset has no annotation files", path=str(dataset.root / "annotations"))
    height, width = dataset.frame_size
    jobs = []
    total_frames = 0
    for video in videos:
        indices = dataset.frame_indices(video)
        annotations = dataset.annotations(video)
        if not annotations:
            logger.warning(f"Video {video} has no annotated frames")
        available = set(indices)
        for annotation in annotations:
            if annotation.frame_index not in available:
                raise DataValidationError(
                    f"frame {annotation.frame_index} is annotated but has no image",
                    path=str(dataset.frame_path(video, annotation.frame_index)),
                )
            jobs.append((video, annotation))
        total_frames += len(indices)

    def write_one(job) -> None:
        video, annotation = job
        segmap = rasterize_masks(annotation, spec, height, width)
        write_mask(dataset.mask_path(video, annotation.frame_index), segmap)

    with ThreadPoolExecutor(max_workers=num_workers or config.NUM_WORKERS) as executor:
        list(executor.map(write_one, jobs))
    logger.info(f"Validated {len(videos)} videos, {len(jobs)} annotated frames; wrote {len(jobs)} masks")
    return PrepareSummary(
        videos=len(videos),
        frames=total_frames,
        annotated_frames=len(jobs),
        masks_written=len(jobs),
    )
