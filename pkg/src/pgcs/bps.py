"""Blind phase search, hard and differentiable.

For each received symbol ``z_k`` and each test angle ``t`` the squared distance
of the rotated symbol ``z_k * exp(1j*t)`` to its nearest constellation point is
summed over a sliding window; the hard variant keeps the angle with the smallest
windowed cost, the soft variant mixes all rotated candidates with
``softmax(-cost / temperature)`` weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np

from .constellation import Constellation
from .nnkit.autodiff import Tensor, as_tensor, softmax

HARD = "hard"
SOFT = "soft"

# Test hook: when not 1.0, the soft-BPS backward pass scales the gradient of
# the windowed cost by this factor (used by the self-test fault injection).
_SOFT_GRAD_SCALE = 1.0


@dataclass(frozen=True)
class BpsConfig:
    num_test_angles: int = 60
    window_size: int = 128
    angle_min: float = -math.pi
    angle_max: float = math.pi
    temperature: float = 1.0
    mode: str = HARD
    # If set, hard estimates are unwrapped with this period (e.g. pi/2 for square QAM).
    unwrap_period: Optional[float] = None

    def __post_init__(self):
        if self.num_test_angles < 2:
            raise ValueError("num_test_angles must be >= 2")
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if not self.angle_min < self.angle_max:
            raise ValueError("angle_min must be < angle_max")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.mode not in (HARD, SOFT):
            raise ValueError(f"mode must be 'hard' or 'soft', got {self.mode!r}")

    def with_(self, **changes) -> "BpsConfig":
        return replace(self, **changes)

    @property
    def angles(self) -> np.ndarray:
        return test_angles(self)


def test_angles(config: BpsConfig) -> np.ndarray:
    """``angle_min + i*(angle_max-angle_min)/T`` for ``i = 0..T-1`` (half-open span)."""
    step = (config.angle_max - config.angle_min) / config.num_test_angles
    return config.angle_min + step * np.arange(config.num_test_angles)


test_angles.__test__ = False  # not a pytest test


def window_bounds(window_size: int) -> tuple:
    """Number of past and future neighbours in the symmetric window."""
    before = window_size // 2
    after = (window_size + 1) // 2 - 1
    return before, after


def edge_mask(n: int, window_size: int) -> np.ndarray:
    """True for the first and last ``window_size//2`` symbols of a frame."""
    edge = np.zeros(n, dtype=bool)
    half = window_size // 2
    edge[:half] = True
    edge[max(n - half, 0):] = True
    return edge


@numba.njit(cache=True, nogil=True)
def _nearest_rotated(zr, zi, cos_t, sin_t, cr, ci, dmin, idx):
    n, n_angles, order = zr.shape[0], cos_t.shape[0], cr.shape[0]
    for k in range(n):
        for t in range(n_angles):
            wr = zr[k] * cos_t[t] - zi[k] * sin_t[t]
            wi = zr[k] * sin_t[t] + zi[k] * cos_t[t]
            best = np.inf
            best_i = 0
            for c in range(order):
                dr = wr - cr[c]
                di = wi - ci[c]
                d = dr * dr + di * di
                if d < best:
                    best = d
                    best_i = c
            dmin[k, t] = best
            idx[k, t] = best_i


def _min_distance(zr, zi, cr, ci, angles):
    zr = np.ascontiguousarray(zr, dtype=np.float64)
    zi = np.ascontiguousarray(zi, dtype=np.float64)
    n, n_angles = zr.size, angles.size
    dmin = np.empty((n, n_angles))
    idx = np.empty((n, n_angles), dtype=np.int64)
    _nearest_rotated(
        zr, zi, np.cos(angles), np.sin(angles),
        np.ascontiguousarray(cr, dtype=np.float64), np.ascontiguousarray(ci, dtype=np.float64),
        dmin, idx,
    )
    return dmin, idx


def distance_metric(z, constellation: Constellation, angles) -> np.ndarray:
    """``D[k, t] = min_c |z_k * exp(1j*angles[t]) - c|**2``."""
    z = np.asarray(z, dtype=np.complex128).reshape(-1)
    pts = constellation.points
    dmin, _ = _min_distance(z.real, z.imag, pts.real, pts.imag, np.asarray(angles, dtype=np.float64))
    return dmin


def _window_sum(d: np.ndarray, before: int, after: int) -> np.ndarray:
    if before == 0 and after == 0:
        return d.copy()
    n = d.shape[0]
    prefix = np.zeros((n + 1,) + d.shape[1:])
    np.cumsum(d, axis=0, out=prefix[1:])
    k = np.arange(n)
    hi = np.minimum(k + after + 1, n)
    lo = np.maximum(k - before, 0)
    return prefix[hi] - prefix[lo]


def windowed_cost(d, window_size: int) -> np.ndarray:
    """Sum of ``d`` over ``[k - N//2, k + ceil(N/2) - 1]``, truncated at the frame edges."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape[0] < 1:
        raise ValueError("need at least one symbol")
    return _window_sum(d, *window_bounds(window_size))


def unwrap_estimates(theta: np.ndarray, period: float) -> np.ndarray:
    return np.unwrap(theta, period=period)


def bps_hard(z, constellation: Constellation, config: BpsConfig):
    """Classical BPS. Returns ``(x_hat, theta_hat)``; ties go to the lowest angle index."""
    z = np.asarray(z, dtype=np.complex128).reshape(-1)
    angles = test_angles(config)
    cost = windowed_cost(distance_metric(z, constellation, angles), config.window_size)
    theta = angles[np.argmin(cost, axis=1)]
    if config.unwrap_period is not None:
        theta = unwrap_estimates(theta, config.unwrap_period)
    return z * np.exp(1j * theta), theta


def resolve_ambiguity_genie(x_hat, x, period: float = math.pi / 2, mask=None):
    """Rotate ``x_hat`` by the multiple of ``period`` closest to the transmitted ``x``.

    Genie-aided: uses the transmitted symbols, so only for reference baselines.
    """
    x_hat = np.asarray(x_hat)
    x = np.asarray(x)
    sel = slice(None) if mask is None else np.asarray(mask, dtype=bool)
    n_rot = int(round(2 * math.pi / period))
    rots = np.exp(1j * period * np.arange(n_rot))
    errors = [np.sum(np.abs(x_hat[sel] * r - x[sel]) ** 2) for r in rots]
    return x_hat * rots[int(np.argmin(errors))]


# differentiable path


def rotated_min_distance(zr: Tensor, zi: Tensor, cr: Tensor, ci: Tensor, angles: np.ndarray) -> Tensor:
    """Graph op for :func:`distance_metric`; gradients flow to ``z`` and the points."""
    zr, zi, cr, ci = map(as_tensor, (zr, zi, cr, ci))
    angles = np.asarray(angles, dtype=np.float64)
    dmin, idx = _min_distance(zr.data, zi.data, cr.data, ci.data, angles)
    order = cr.size

    def backward(g):
        cos_t, sin_t = np.cos(angles), np.sin(angles)
        wr = zr.data[:, None] * cos_t - zi.data[:, None] * sin_t
        wi = zr.data[:, None] * sin_t + zi.data[:, None] * cos_t
        ur = wr - cr.data[idx]
        ui = wi - ci.data[idx]
        # d|u|^2/dz = 2 Re(conj(u) e^{jt}),  d|u|^2/d(Im z) = -2 Im(conj(u) e^{jt})
        gzr = 2.0 * np.sum(g * (ur * cos_t + ui * sin_t), axis=1)
        gzi = 2.0 * np.sum(g * (ui * cos_t - ur * sin_t), axis=1)
        flat = idx.ravel()
        gcr = np.bincount(flat, weights=(-2.0 * g * ur).ravel(), minlength=order)
        gci = np.bincount(flat, weights=(-2.0 * g * ui).ravel(), minlength=order)
        return gzr, gzi, gcr, gci

    return Tensor.from_op(dmin, (zr, zi, cr, ci), backward)


def window_sum(d: Tensor, window_size: int) -> Tensor:
    """Graph op for :func:`windowed_cost`."""
    d = as_tensor(d)
    before, after = window_bounds(window_size)

    def backward(g):
        return (_window_sum(g, after, before) * _SOFT_GRAD_SCALE,)

    return Tensor.from_op(_window_sum(d.data, before, after), (d,), backward)


def bps_soft_graph(zr: Tensor, zi: Tensor, cr: Tensor, ci: Tensor, config: BpsConfig):
    """Differentiable BPS on real/imag tensors. Returns ``(x_hat_re, x_hat_im, weights)``."""
    angles = test_angles(config)
    cost = window_sum(rotated_min_distance(zr, zi, cr, ci, angles), config.window_size)
    weights = softmax(cost * (-1.0 / config.temperature), axis=1)
    a = weights @ np.cos(angles)
    b = weights @ np.sin(angles)
    zr, zi = as_tensor(zr), as_tensor(zi)
    return zr * a - zi * b, zr * b + zi * a, weights


def bps_soft(z, constellation: Constellation, config: BpsConfig) -> np.ndarray:
    """Soft BPS: ``x_hat_k = sum_t w[k,t] * z_k * exp(1j*angles[t])``."""
    z = np.asarray(z, dtype=np.complex128).reshape(-1)
    pts = constellation.points
    xr, xi, _ = bps_soft_graph(Tensor(z.real), Tensor(z.imag), Tensor(pts.real), Tensor(pts.imag), config)
    return xr.data + 1j * xi.data


def soft_weights(z, constellation: Constellation, config: BpsConfig) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128).reshape(-1)
    pts = constellation.points
    return bps_soft_graph(Tensor(z.real), Tensor(z.imag), Tensor(pts.real), Tensor(pts.imag), config)[2].data
