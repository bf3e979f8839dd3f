"""Annotation ingestion, mask rasterization, augmentation, windows and file formats."""

from toolsight.dataio.annotations import (
    load_annotations,
    load_taxonomy,
    save_taxonomy,
    write_annotations,
)
from toolsight.dataio.augment import AugmentParams, augment, augment_annotation
from toolsight.dataio.dataset import KeypointDataset, write_manifest
from toolsight.dataio.formats import (
    read_flo,
    read_image,
    read_mask,
    read_pfm,
    write_flo,
    write_image,
    write_mask,
    write_pfm,
)
from toolsight.dataio.masks import rasterize_masks
from toolsight.dataio.windows import ClipWindow, build_window, make_windows, window_indices

__all__ = [
    "AugmentParams",
    "ClipWindow",
    "KeypointDataset",
    "augment",
    "augment_annotation",
    "build_window",
    "load_annotations",
    "load_taxonomy",
    "make_windows",
    "rasterize_masks",
    "read_flo",
    "read_image",
    "read_mask",
    "read_pfm",
    "save_taxonomy",
    "window_indices",
    "write_annotations",
    "write_flo",
    "write_image",
    "write_manifest",
    "write_mask",
    "write_pfm",
]
