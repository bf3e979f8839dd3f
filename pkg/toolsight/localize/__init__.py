"""Blob analysis and keypoint extraction from segmentation maps."""

from toolsight.localize.blobs import Blob, connected_components
from toolsight.localize.keypoints import extract_keypoints
from toolsight.localize.results import read_track_results, write_track_results

__all__ = [
    "Blob",
    "connected_components",
    "extract_keypoints",
    "read_track_results",
    "write_track_results",
]
