"""Adam optimizer with per-group step learning-rate schedules."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from toolsight.exceptions import ShapeError, UsageError
from toolsight.models.models import LrSchedule
from toolsight.tensor.tensor import Tape, Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moment buffers and step counter of one parameter group."""

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise UsageError(f"Adam betas must lie in (0, 1): {self.beta1}, {self.beta2}")


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[Optional[np.ndarray]],
    state: AdamState,
    lr: float,
) -> None:
    """
    Apply one bias-corrected Adam update in place.

    Args:
        params: Parameters to update
        grads: Gradients aligned with ``params`` (None counts as zero)
        state: Moment buffers, created on first use
        lr: Learning rate, must be positive

    Raises:
        UsageError: If ``lr`` is not positive
        ShapeError: If a gradient does not match its parameter
    """
    if lr <= 0:
        raise UsageError(f"Adam learning rate must be positive, got {lr}")
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros(p.shape, dtype=np.float64) for p in params]
        state.v = [np.zeros(p.shape, dtype=np.float64) for p in params]

    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    for index, (param, grad) in enumerate(zip(params, grads)):
        if grad is None:
            grad = np.zeros(param.shape)
        if grad.shape != param.shape:
            raise ShapeError(
                f"gradient shape {list(grad.shape)} != parameter shape {list(param.shape)}"
            )
        m = state.m[index] = state.beta1 * state.m[index] + (1 - state.beta1) * grad
        v = state.v[index] = state.beta2 * state.v[index] + (1 - state.beta2) * grad * grad
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        param.data[...] = param.data - update


@dataclass
class ParamGroup:
    """Parameters sharing one learning-rate schedule."""

    name: str
    params: List[Tensor]
    schedule: LrSchedule
    state: AdamState = field(default_factory=AdamState)


class Adam:
    """Adam over named parameter groups, each with its own schedule."""

    def __init__(self, groups: Sequence[ParamGroup]):
        self.groups = list(groups)

    def zero_grad(self) -> None:
        """Reset parameter gradients and drop whatever is left on this thread's tape."""
        Tape.current().clear()
        for group in self.groups:
            for param in group.params:
                param.zero_grad()

    def learning_rates(self, epoch: int) -> Dict[str, float]:
        return {group.name: group.schedule.lr(epoch) for group in self.groups}

    def step(self, epoch: int) -> None:
        """Update every group at its scheduled rate; a zero rate leaves the group frozen."""
        for group in self.groups:
            lr = group.schedule.lr(epoch)
            if lr == 0:
                continue
            adam_step(group.params, [p.grad for p in group.params], group.state, lr)
