"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import ShapeError


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One Adam update. Returns ``(new_params, state)``; ``state`` is updated in place."""
    if not (len(params) == len(grads) == len(state.m)):
        raise ShapeError("params, grads and optimizer state differ in length")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ShapeError(f"shape mismatch for parameter {i}: {p.shape} vs {g.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return new_params, state


@dataclass
class Adam:
    """Convenience wrapper updating :class:`Tensor` parameters in place."""

    params: list
    state: AdamState = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = AdamState.zeros_like([p.data for p in self.params])

    def step(self, grads: Sequence[np.ndarray]) -> None:
        new, _ = adam_step([p.data for p in self.params], grads, self.state)
        for p, value in zip(self.params, new):
            p.data = value

    def step_from_tensors(self) -> None:
        self.step([np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params])
