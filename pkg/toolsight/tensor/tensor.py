"""
Dense tensor with reverse-mode automatic differentiation.

Differentiable operations record a node on a thread-local tape. ``backward``
walks the tape once in reverse, accumulates gradients into leaf tensors that
require them, and clears the tape.
"""

import contextlib
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from toolsight.exceptions import NumericalError, ShapeError, UsageError

logger = logging.getLogger(__name__)

Number = Union[int, float]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_local = threading.local()


def _thread_state():
    if not hasattr(_local, "tape"):
        _local.tape = Tape()
        _local.grad_enabled = True
        _local.dtype = np.float32
    return _local


def get_default_dtype() -> np.dtype:
    return _thread_state().dtype


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """Temporarily create tensors with another float dtype (used by gradient checks)."""
    state = _thread_state()
    previous = state.dtype
    state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        state.dtype = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run forward ops without recording them on the tape."""
    state = _thread_state()
    previous = state.grad_enabled
    state.grad_enabled = False
    try:
        yield
    finally:
        state.grad_enabled = previous


def grad_enabled() -> bool:
    return _thread_state().grad_enabled


@dataclass
class Node:
    """One executed differentiable operation."""

    name: str
    output: "Tensor"
    inputs: Tuple["Tensor", ...]
    backward: BackwardFn


class Tape:
    """Ordered record of differentiable operations in execution order."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.generation = 0

    @staticmethod
    def current() -> "Tape":
        return _thread_state().tape

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()
        self.generation += 1

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    """n-dimensional float array that can take part in the gradient tape."""

    def __init__(self, data, requires_grad: bool = False):
        self.data: np.ndarray = np.asarray(data, dtype=get_default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None
        self._generation: Optional[int] = None

    @classmethod
    def zeros(cls, shape: Sequence[int], requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(tuple(shape)), requires_grad=requires_grad)

    @classmethod
    def ones(cls, shape: Sequence[int], requires_grad: bool = False) -> "Tensor":
        return cls(np.ones(tuple(shape)), requires_grad=requires_grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    # Elementwise arithmetic. Tensor operands must have identical shapes.

    def __add__(self, other: Union["Tensor", Number]) -> "Tensor":
        if isinstance(other, Tensor):
            _same_shape("add", self, other)
            return make_result("add", self.data + other.data, (self, other), lambda g: (g, g))
        return make_result("add", self.data + other, (self,), lambda g: (g,))

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return make_result("neg", -self.data, (self,), lambda g: (-g,))

    def __sub__(self, other: Union["Tensor", Number]) -> "Tensor":
        if isinstance(other, Tensor):
            _same_shape("sub", self, other)
            return make_result("sub", self.data - other.data, (self, other), lambda g: (g, -g))
        return make_result("sub", self.data - other, (self,), lambda g: (g,))

    def __rsub__(self, other: Number) -> "Tensor":
        return make_result("rsub", other - self.data, (self,), lambda g: (-g,))

    def __mul__(self, other: Union["Tensor", Number]) -> "Tensor":
        if isinstance(other, Tensor):
            _same_shape("mul", self, other)
            a, b = self.data, other.data
            return make_result("mul", a * b, (self, other), lambda g: (g * b, g * a))
        return make_result("mul", self.data * other, (self,), lambda g: (g * other,))

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Tensor", Number]) -> "Tensor":
        if isinstance(other, Tensor):
            _same_shape("div", self, other)
            a, b = self.data, other.data
            return make_result(
                "div", a / b, (self, other), lambda g: (g / b, -g * a / (b * b))
            )
        return make_result("div", self.data / other, (self,), lambda g: (g / other,))

    def __rtruediv__(self, other: Number) -> "Tensor":
        b = self.data
        return make_result("rdiv", other / b, (self,), lambda g: (-g * other / (b * b),))

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> "Tensor":
        """Sum over ``axis`` (all axes by default)."""
        shape = self.shape
        total = np.sum(self.data, axis=axis)

        def grad(g: np.ndarray):
            if axis is None:
                return (np.full(shape, g, dtype=g.dtype),)
            return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

        return make_result("sum", total, (self,), grad)

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.size)

    def log(self, eps: float = 0.0) -> "Tensor":
        """Natural logarithm of max(x, eps)."""
        x = self.data
        clamped = np.maximum(x, eps) if eps > 0 else x
        if np.any(clamped <= 0):
            raise NumericalError("log of a non-positive value")
        keep = x >= eps if eps > 0 else np.ones_like(x, dtype=bool)
        return make_result("log", np.log(clamped), (self,), lambda g: (g * keep / clamped,))


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ")


def make_result(
    name: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn
) -> Tensor:
    """Wrap an op result and record it on the tape when any input needs gradients."""
    out = Tensor(data)
    if not np.all(np.isfinite(out.data)):
        raise NumericalError(f"{name} produced non-finite values")
    if grad_enabled() and any(t.requires_grad for t in inputs):
        tape = Tape.current()
        out.requires_grad = True
        out._node = Node(name=name, output=out, inputs=inputs, backward=backward_fn)
        out._generation = tape.generation
        tape.record(out._node)
    return out


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it.

    Args:
        loss: Finite scalar produced on the current tape

    Raises:
        UsageError: If the loss is not a scalar or not on the current tape
        NumericalError: If the loss is not finite
    """
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    tape = Tape.current()
    if loss._node is None or loss._generation != tape.generation:
        raise UsageError("loss was not produced on the current tape")
    try:
        if not np.all(np.isfinite(loss.data)):
            raise NumericalError(f"loss is not finite: {loss.data}")
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(tape.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for tensor, tensor_grad in zip(node.inputs, node.backward(g)):
                if tensor_grad is None or not tensor.requires_grad:
                    continue
                tensor_grad = np.asarray(tensor_grad, dtype=tensor.data.dtype).reshape(tensor.shape)
                if tensor.is_leaf:
                    tensor.grad = tensor_grad if tensor.grad is None else tensor.grad + tensor_grad
                else:
                    key = id(tensor)
                    grads[key] = grads[key] + tensor_grad if key in grads else tensor_grad
        logger.debug(f"Backward pass over {len(tape)} nodes")
    finally:
        # the tape is spent even when the pass fails
        tape.clear()
