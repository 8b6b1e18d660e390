"""Dense feed-forward networks built on :mod:`pgcs.nnkit.autodiff`."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import ShapeError, Tensor, as_tensor

ACTIVATIONS = ("relu", "linear")


@dataclass
class Dense:
    weight: Tensor  # [out, in]
    bias: Tensor  # [out]
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"inconsistent layer shapes {self.weight.shape}, {self.bias.shape}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight.T + self.bias
        return y.relu() if self.activation == "relu" else y


class DenseNet:
    """Affine layers with ReLU on the hidden layers and a linear head."""

    def __init__(self, layers: Sequence[Dense]):
        layers = list(layers)
        if not layers:
            raise ValueError("a DenseNet needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        self.layers = layers

    @classmethod
    def create(cls, dims: Sequence[int], rng: np.random.Generator) -> "DenseNet":
        """Glorot-uniform weights, biases uniform in +-1/sqrt(fan_in)."""
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            b = rng.uniform(-1.0, 1.0, size=fan_out) / np.sqrt(fan_in)
            act = "linear" if i == len(dims) - 2 else "relu"
            layers.append(Dense(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True), act))
        return cls(layers)

    @property
    def dims(self) -> list:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list:
        params = []
        for layer in self.layers:
            params.extend((layer.weight, layer.bias))
        return params

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        squeeze = x.ndim == 1
        if squeeze:
            x = x.reshape(1, -1)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"expected input width {self.in_dim}, got {x.shape[-1]}")
        for layer in self.layers:
            x = layer(x)
        return x.reshape(-1) if squeeze else x


def forward(net: DenseNet, x) -> np.ndarray:
    """Plain numeric forward pass."""
    return net(np.asarray(x, dtype=np.float64)).data
