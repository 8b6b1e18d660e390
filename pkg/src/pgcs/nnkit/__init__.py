"""Minimal dense-network kit: autodiff, dense layers, Adam and BCE."""

from .autodiff import GraphConsumedError, ShapeError, Tensor, backward, concat, grad, softmax, stack
from .layers import Dense, DenseNet, forward
from .losses import LLR_CLAMP, DegenerateBatchError, bce_bits, bce_with_logits
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Adam",
    "AdamState",
    "DegenerateBatchError",
    "Dense",
    "DenseNet",
    "GraphConsumedError",
    "LLR_CLAMP",
    "ShapeError",
    "Tensor",
    "adam_step",
    "backward",
    "bce_bits",
    "bce_with_logits",
    "concat",
    "forward",
    "grad",
    "softmax",
    "stack",
]
