"""Training, inference, evaluation and rendering pipelines."""

from toolsight.pipeline.ablation import Evaluation, evaluate_dataset, run_ablation
from toolsight.pipeline.batching import BatchLoader, sample_seed
from toolsight.pipeline.inference import InferenceRun, KeypointTracker, infer
from toolsight.pipeline.prepare import PrepareSummary, prepare_dataset
from toolsight.pipeline.render import render_overlay, render_video
from toolsight.pipeline.trainer import EpochRecord, TrainingRun, train_mfc, train_sfc

__all__ = [
    "BatchLoader",
    "EpochRecord",
    "Evaluation",
    "InferenceRun",
    "KeypointTracker",
    "PrepareSummary",
    "TrainingRun",
    "evaluate_dataset",
    "infer",
    "prepare_dataset",
    "render_overlay",
    "render_video",
    "run_ablation",
    "sample_seed",
    "train_mfc",
    "train_sfc",
]
