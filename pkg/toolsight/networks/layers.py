"""Convolution parameter sets shared by MiniSeg and MFCNet."""

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from toolsight.exceptions import CheckpointError
from toolsight.tensor import Tensor, conv2d, relu


@dataclass
class ConvParams:
    """Weight [Cout, Cin, 3, 3] and bias [Cout] of one conv layer."""

    weight: Tensor
    bias: Tensor
    stride: int = 1

    @classmethod
    def he_init(cls, rng: np.random.Generator, cin: int, cout: int, stride: int = 1) -> "ConvParams":
        std = np.sqrt(2.0 / (cin * 9))
        weight = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(np.float32)
        return cls(
            weight=Tensor(weight, requires_grad=True),
            bias=Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True),
            stride=stride,
        )

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, pad=1)


class ParamSet:
    """Ordered named conv layers."""

    def __init__(self, layers: Dict[str, ConvParams]):
        self.layers = layers

    def parameters(self) -> List[Tensor]:
        params = []
        for layer in self.layers.values():
            params.extend([layer.weight, layer.bias])
        return params

    def named_tensors(self) -> Dict[str, np.ndarray]:
        tensors = {}
        for name, layer in self.layers.items():
            tensors[f"{name}.weight"] = layer.weight.data
            tensors[f"{name}.bias"] = layer.bias.data
        return tensors

    def load_named(self, tensors: Dict[str, np.ndarray], prefix: str = "") -> None:
        """Copy stored arrays into the layers, checking names and shapes."""
        for key, target in self._targets(prefix):
            if key not in tensors:
                raise CheckpointError(f"checkpoint is missing tensor {key}")
            value = tensors[key]
            if value.shape != target.shape:
                raise CheckpointError(
                    f"tensor {key} has shape {list(value.shape)}, model expects {list(target.shape)}"
                )
            target.data[...] = value

    def _targets(self, prefix: str):
        for name, layer in self.layers.items():
            yield f"{prefix}{name}.weight", layer.weight
            yield f"{prefix}{name}.bias", layer.bias

    @staticmethod
    def relu_stack(x: Tensor, layers: Sequence[ConvParams]) -> Tensor:
        """Conv + ReLU for every layer but the last, which stays linear."""
        for layer in layers[:-1]:
            x = relu(layer(x))
        return layers[-1](x)
