"""Composite segmentation loss: 0.7 H - 0.3 ln J."""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from toolsight.exceptions import ShapeError
from toolsight.tensor import Tensor

PROB_FLOOR = 1e-8
JACCARD_EPS = 1e-7
NLL_WEIGHT = 0.7
JACCARD_WEIGHT = 0.3


@dataclass
class LossTerms:
    H: Tensor
    J: Tensor
    total: Tensor

    def values(self) -> Dict[str, float]:
        return {"H": self.H.item(), "J": self.J.item(), "total": self.total.item()}


def one_hot(target: np.ndarray, num_classes: int) -> np.ndarray:
    if target.min(initial=0) < 0 or target.max(initial=0) >= num_classes:
        raise ShapeError(
            f"target labels span [{target.min()}, {target.max()}], probmap has {num_classes} classes"
        )
    return (np.arange(num_classes).reshape(-1, 1, 1) == target[None]).astype(np.float32)


def _check(probmap: Tensor, target: np.ndarray) -> None:
    if probmap.ndim != 3 or probmap.shape[1:] != target.shape:
        raise ShapeError(f"probmap {list(probmap.shape)} does not match target {list(target.shape)}")


def weighted_nll(probmap: Tensor, target: np.ndarray, background_weight: float = 0.01) -> Tensor:
    """
    Class-weighted per-pixel negative log likelihood.

    H = sum_pixels w(y) * -ln p_y / sum_pixels w(y), with w = background_weight
    for class 0 and 1 for keypoint classes. Probabilities are floored at 1e-8.
    """
    _check(probmap, target)
    onehot = one_hot(target, probmap.shape[0])
    weights = np.where(target == 0, background_weight, 1.0)
    selector = onehot * (weights / weights.sum())[None]
    return -(probmap.log(eps=PROB_FLOOR) * Tensor(selector)).sum()


def soft_jaccard(probmap: Tensor, target: np.ndarray, keypoint_classes: Optional[Sequence[int]] = None) -> Tensor:
    """
    Mean soft Jaccard index over keypoint classes.

    J_c = (sum p_c g_c + eps) / (sum p_c + sum g_c - sum p_c g_c + eps), eps = 1e-7.
    """
    _check(probmap, target)
    num_classes = probmap.shape[0]
    if keypoint_classes is None:
        keypoint_classes = range(1, num_classes)
    keypoint_classes = list(keypoint_classes)
    if not keypoint_classes or 0 in keypoint_classes:
        raise ShapeError(f"Jaccard classes must be non-empty keypoint ids, got {keypoint_classes}")
    onehot = one_hot(target, num_classes)
    intersection = (probmap * Tensor(onehot)).sum(axis=(1, 2))
    predicted = probmap.sum(axis=(1, 2))
    union = predicted - intersection + Tensor(onehot.sum(axis=(1, 2)) + JACCARD_EPS)
    ratio = (intersection + JACCARD_EPS) / union
    mask = np.zeros(num_classes, dtype=np.float32)
    mask[keypoint_classes] = 1.0 / len(keypoint_classes)
    return (ratio * Tensor(mask)).sum()


def combine(H: Tensor, J: Tensor) -> Tensor:
    return H * NLL_WEIGHT - J.log() * JACCARD_WEIGHT


def composite_loss(
    probmap: Tensor,
    target: np.ndarray,
    background_weight: float = 0.01,
    keypoint_classes: Optional[Sequence[int]] = None,
) -> LossTerms:
    """
    Training loss of one probability map.

    Args:
        probmap: [C, H, W] probabilities
        target: [H, W] SegMap
        background_weight: NLL weight of class 0
        keypoint_classes: Classes averaged by the Jaccard term (default 1..C-1)

    Returns:
        LossTerms with H, J and total = 0.7 H - 0.3 ln J
    """
    H = weighted_nll(probmap, target, background_weight)
    J = soft_jaccard(probmap, target, keypoint_classes)
    return LossTerms(H=H, J=J, total=combine(H, J))


def mean_terms(terms: Sequence[LossTerms]) -> LossTerms:
    """Average loss terms over a batch; the total stays differentiable."""
    if not terms:
        raise ShapeError("cannot average an empty batch")
    total = terms[0].total
    H, J = terms[0].H, terms[0].J
    for item in terms[1:]:
        total = total + item.total
        H = H + item.H
        J = J + item.J
    n = float(len(terms))
    return LossTerms(H=H * (1.0 / n), J=J * (1.0 / n), total=total * (1.0 / n))
