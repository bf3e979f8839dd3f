"""Toolsight - surgical tool keypoint tracking via keypoint-ROI segmentation."""

__version__ = "0.1.0"
