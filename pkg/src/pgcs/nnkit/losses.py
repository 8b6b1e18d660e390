"""Binary cross-entropy on LLRs.

Sign convention used throughout the project: ``L = log(P(b=0) / P(b=1))``
(natural log), so a large positive LLR means "bit is 0".
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor, as_tensor

LLR_CLAMP = 40.0
NATS_PER_BIT = math.log(2.0)


class DegenerateBatchError(ValueError):
    pass


def _check(llrs_shape, bits, mask):
    bits = np.asarray(bits)
    if bits.shape != tuple(llrs_shape):
        raise ValueError(f"llrs {tuple(llrs_shape)} and bits {bits.shape} differ in shape")
    rows = np.ones(bits.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if rows.shape != (bits.shape[0],):
        raise ValueError("mask must flag each symbol (row)")
    if not rows.any():
        raise DegenerateBatchError("mask selects no symbols")
    return bits, rows


def bce_with_logits(llrs: Tensor, bits, mask=None) -> Tensor:
    """Mean BCE in nats over the (symbol, bit) cells whose symbol row is in ``mask``.

    ``mask`` is True for symbols that count; pass ``~edge`` flags from BPS.
    """
    llrs = as_tensor(llrs)
    bits, rows = _check(llrs.shape, bits, mask)
    sign = 2.0 * bits[rows] - 1.0  # b=1 -> softplus(L), b=0 -> softplus(-L)
    cells = (llrs[rows].clip(-LLR_CLAMP, LLR_CLAMP) * sign).softplus()
    return cells.mean()


def bce_cells_bits(llrs, bits) -> np.ndarray:
    """Per-cell BCE in bits (no reduction, no mask)."""
    llrs = np.clip(np.asarray(llrs, dtype=np.float64), -LLR_CLAMP, LLR_CLAMP)
    x = (2.0 * np.asarray(bits) - 1.0) * llrs
    return (np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))) / NATS_PER_BIT


def bce_bits(llrs, bits, mask=None) -> float:
    bits, rows = _check(np.shape(llrs), bits, mask)
    return float(bce_cells_bits(np.asarray(llrs)[rows], bits[rows]).mean())
