"""Segmentation networks, the composite loss and checkpoints."""

from toolsight.networks.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from toolsight.networks.losses import (
    LossTerms,
    composite_loss,
    mean_terms,
    soft_jaccard,
    weighted_nll,
)
from toolsight.networks.mfcnet import MfcNetParams, assemble_mfc_input, mfc_forward
from toolsight.networks.miniseg import MiniSegParams, sfc_forward, sfc_forward_any

__all__ = [
    "Checkpoint",
    "LossTerms",
    "MfcNetParams",
    "MiniSegParams",
    "assemble_mfc_input",
    "composite_loss",
    "load_checkpoint",
    "mean_terms",
    "mfc_forward",
    "save_checkpoint",
    "sfc_forward",
    "sfc_forward_any",
    "soft_jaccard",
    "weighted_nll",
]
