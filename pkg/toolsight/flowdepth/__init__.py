"""Optical-flow and depth providers and flow rescaling."""

from toolsight.flowdepth.providers import (
    FileProvider,
    FlowDepthProvider,
    ProviderFactory,
    StaticSceneProvider,
    SyntheticOracleProvider,
)
from toolsight.flowdepth.rescale import downsample_flow, normalize_depth, upscale_flow

__all__ = [
    "FileProvider",
    "FlowDepthProvider",
    "ProviderFactory",
    "StaticSceneProvider",
    "SyntheticOracleProvider",
    "downsample_flow",
    "normalize_depth",
    "upscale_flow",
]
