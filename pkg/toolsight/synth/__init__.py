"""Synthetic articulated-tool scenes with analytic keypoints, flow and depth."""

from toolsight.synth.dataset import clip_seeds, gen_dataset
from toolsight.synth.scene import SyntheticClip, SyntheticScene, gen_clip

__all__ = ["SyntheticClip", "SyntheticScene", "clip_seeds", "gen_clip", "gen_dataset"]
