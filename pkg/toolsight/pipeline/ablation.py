"""Evaluation of checkpoints on datasets and the K x variant x depth ablation."""

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import pandas as pd

from toolsight.dataio.dataset import KeypointDataset
from toolsight.flowdepth.providers import FlowDepthProvider
from toolsight.metrics.matching import match_all
from toolsight.metrics.report import aggregate
from toolsight.models.models import MetricReport, MfcConfig, TrainConfig
from toolsight.networks.checkpoint import Checkpoint
from toolsight.pipeline.inference import InferenceRun, infer
from toolsight.pipeline.trainer import train_mfc
from toolsight.utils import default_tau

logger = logging.getLogger(__name__)


@dataclass
class Evaluation:
    report: MetricReport
    run: InferenceRun


def evaluate_dataset(
    checkpoint: Checkpoint,
    dataset: KeypointDataset,
    provider: Optional[FlowDepthProvider] = None,
    tau: Optional[float] = None,
    min_area: int = 3,
) -> Evaluation:
    """Infer on every video of ``dataset`` and score against its annotations."""
    tau = tau or default_tau(dataset.frame_size)
    run = infer(checkpoint, {video: dataset.frames(video) for video in dataset.videos}, provider, min_area)
    annotations = [a for video in dataset.videos for a in dataset.annotations(video)]
    records = match_all(run.results, annotations, tau, dataset.taxonomy)
    return Evaluation(report=aggregate(records, dataset.taxonomy, tau), run=run)


def ablation_grid(
    Ks: Sequence[int], variants: Sequence[str], depths: Sequence[bool]
) -> List[Tuple[int, str, bool]]:
    return list(itertools.product(Ks, variants, depths))


def run_ablation(
    train_set: KeypointDataset,
    test_set: KeypointDataset,
    sfc_ckpt: Checkpoint,
    cfg: TrainConfig,
    provider_for: Callable[[KeypointDataset], FlowDepthProvider],
    Ks: Sequence[int] = (2, 3, 4),
    variants: Sequence[str] = ("B", "W"),
    depths: Sequence[bool] = (True, False),
    tau: Optional[float] = None,
    min_area: int = 3,
    run_dir: Optional[Union[str, Path]] = None,
) -> pd.DataFrame:
    """
    Train and evaluate one MFC model per (K, variant, depth) cell.

    Args:
        train_set: Training dataset
        test_set: Held-out dataset
        sfc_ckpt: Pretrained SFC checkpoint shared by every cell
        cfg: Training hyperparameters of each cell
        provider_for: Builds the flow/depth provider of a dataset
        Ks: Window lengths
        variants: MFCNet variants
        depths: Whether depth is used
        tau: Match threshold (default scales with the frame size)
        min_area: Smallest blob that yields a detection
        run_dir: Cells write their checkpoints below this directory

    Returns:
        One row per cell with precision, recall, accuracy, RMSE and throughput
    """
    tau = tau or default_tau(test_set.frame_size)
    train_provider, test_provider = provider_for(train_set), provider_for(test_set)
    rows = []
    for K, variant, use_depth in ablation_grid(Ks, variants, depths):
        mfc_cfg = MfcConfig(K=K, variant=variant, use_depth=use_depth, num_classes=train_set.taxonomy.num_classes)
        label = f"K{K}-{variant}-{'depth' if use_depth else 'nodepth'}"
        logger.info(f"Ablation cell {label}")
        cell_dir = Path(run_dir) / label if run_dir is not None else None
        training = train_mfc(train_set, sfc_ckpt, cfg, mfc_cfg, train_provider, run_dir=cell_dir)
        evaluation = evaluate_dataset(training.checkpoint, test_set, test_provider, tau, min_area)
        report = evaluation.report
        rows.append(
            {
                "K": K,
                "variant": f"MFCNet-{variant}",
                "depth": "with depth" if use_depth else "w/o depth",
                "precision %": report.precision,
                "recall %": report.recall,
                "accuracy %": report.accuracy,
                "RMSE px": report.rmse_text(),
                "pooled RMSE px": report.rmse_pooled,
                "frames/s": evaluation.run.fps,
            }
        )
    return pd.DataFrame(rows)
