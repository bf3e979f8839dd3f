"""Write synthetic clips to disk in the dataset layout."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from toolsight import config
from toolsight.dataio.annotations import save_taxonomy, write_annotations
from toolsight.dataio.dataset import KeypointDataset, write_manifest
from toolsight.dataio.formats import write_flo, write_image, write_pfm
from toolsight.exceptions import ToolsightError
from toolsight.flowdepth.rescale import downsample_flow
from toolsight.models.models import DatasetManifest, SceneConfig
from toolsight.synth.scene import gen_clip
from toolsight.utils import atomic_write

logger = logging.getLogger(__name__)

SCENE_FILE = "scene.json"


def clip_seeds(seed: int, n_clips: int) -> Dict[str, int]:
    """Per-clip generator seeds derived from the dataset seed."""
    draws = np.random.default_rng(seed).integers(0, 2**31 - 1, size=n_clips)
    return {f"clip_{index:03d}": int(value) for index, value in enumerate(draws)}


def _write_clip(cfg: SceneConfig, dataset: KeypointDataset, video_id: str, seed: int, flow_scale: int) -> int:
    clip = gen_clip(cfg, seed, video_id)
    for index, frame in enumerate(clip.frames):
        write_image(dataset.frame_path(video_id, index), frame)
        write_pfm(dataset.depth_path(video_id, index), clip.depths[index])
    for (current, past), flow in sorted(clip.flows.items()):
        write_flo(dataset.flow_path(video_id, current, past), downsample_flow(flow, flow_scale))
    write_annotations(
        dataset.annotation_path(video_id),
        clip.annotations,
        dataset.taxonomy,
        frame_size=(cfg.height, cfg.width),
    )
    return len(clip.annotations)


def gen_dataset(
    cfg: SceneConfig,
    n_clips: int,
    seed: int,
    root: Union[str, Path],
    flow_scale: int = 1,
    num_workers: Optional[int] = None,
) -> KeypointDataset:
    """
    Generate ``n_clips`` clips and write them as a dataset.

    Frames go to PNG, flows for every offset up to ``cfg.max_flow_offset``
    to ``.flo`` (optionally at 1/flow_scale resolution), depths to PFM and
    keypoints to the annotation JSON. The taxonomy, the scene config and a
    manifest with the per-clip seeds are written next to them, so the same
    seed always produces the same bytes.

    Args:
        cfg: Scene configuration
        n_clips: Number of clips (videos)
        seed: Dataset seed
        root: Target directory, created when missing
        flow_scale: Downsample factor of the stored flow files
        num_workers: Clips generated in parallel (default from config)

    Returns:
        The written dataset, opened for reading

    Raises:
        SceneConfigError: If the config cannot keep keypoints inside the frame
        ShapeError: If the frame size is not divisible by ``flow_scale``
        ToolsightError: On IO failures, naming the path
    """
    if n_clips < 1:
        raise ValueError("n_clips must be at least 1")
    if cfg.height % flow_scale or cfg.width % flow_scale:
        # Fail before any file is written
        downsample_flow(np.zeros((2, cfg.height, cfg.width), dtype=np.float32), flow_scale)
    root = Path(root)
    seeds = clip_seeds(seed, n_clips)
    taxonomy = cfg.taxonomy()
    try:
        root.mkdir(parents=True, exist_ok=True)
        save_taxonomy(root / KeypointDataset.TAXONOMY_FILE, taxonomy)
        atomic_write(root / SCENE_FILE, (cfg.model_dump_json(indent=2) + "\n").encode("utf-8"))
        write_manifest(
            root,
            DatasetManifest(
                height=cfg.height,
                width=cfg.width,
                videos=list(seeds),
                flow_scale=flow_scale,
                max_flow_offset=cfg.max_flow_offset,
                scene=cfg,
                clip_seeds=seeds,
            ),
        )
        dataset = KeypointDataset(root)

        logger.info(f"Generating {n_clips} clips of {cfg.frames_per_clip} frames into {root}")
        with ThreadPoolExecutor(max_workers=num_workers or config.NUM_WORKERS) as executor:
            counts = list(
                executor.map(
                    lambda item: _write_clip(cfg, dataset, item[0], item[1], flow_scale),
                    seeds.items(),
                )
            )
    except OSError as e:
        raise ToolsightError(
            f"cannot write dataset: {e}", detail=f"target directory: {root}"
        ) from e
    logger.info(f"Wrote {sum(counts)} annotated frames to {root}")
    return KeypointDataset(root)
