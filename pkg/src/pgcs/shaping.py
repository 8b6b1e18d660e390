"""Channel-conditioned neural mapper (Tx-NN) and demapper (Rx-NN).

The Tx-NN maps the (scaled) channel condition ``(sigma_n, sigma_phi)`` to the
``2**m`` constellation points, interleaved as ``[Re p0, Im p0, Re p1, ...]``.
The one-hot index of a symbol is its bit pattern (MSB first), so the labeling
is learned through where each indexed point ends up.

The Rx-NN maps ``(Re x_hat, Im x_hat, cond_n, cond_phi)`` to ``m`` LLRs with
``L = log(P(b=0)/P(b=1))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams
from .constellation import Constellation, ConstellationError, bits_to_int, make_square_qam
from .nnkit import DenseNet, Tensor, concat
from .nnkit.autodiff import as_tensor


@dataclass(frozen=True)
class InputScaler:
    """Affine map of ``(sigma_n, sigma_phi)`` onto ``[0, 1]**2`` over the training ranges."""

    sigma_n_min: float
    sigma_n_max: float
    sigma_phi_min: float
    sigma_phi_max: float

    @staticmethod
    def _scale(value, lo, hi):
        if hi == lo:
            return np.full_like(np.asarray(value, dtype=np.float64), 0.5)
        return (np.asarray(value, dtype=np.float64) - lo) / (hi - lo)

    def __call__(self, sigma_n, sigma_phi) -> np.ndarray:
        """Scaled features, shape ``(..., 2)``."""
        return np.stack(
            [
                self._scale(sigma_n, self.sigma_n_min, self.sigma_n_max),
                self._scale(sigma_phi, self.sigma_phi_min, self.sigma_phi_max),
            ],
            axis=-1,
        )

    def midpoint(self) -> ChannelParams:
        return ChannelParams(
            0.5 * (self.sigma_n_min + self.sigma_n_max), 0.5 * (self.sigma_phi_min + self.sigma_phi_max)
        )

    def as_dict(self) -> dict:
        return {
            "sigma_n_min": self.sigma_n_min,
            "sigma_n_max": self.sigma_n_max,
            "sigma_phi_min": self.sigma_phi_min,
            "sigma_phi_max": self.sigma_phi_max,
        }


class TxNet:
    def __init__(self, m: int, net: DenseNet):
        if net.in_dim != 2 or net.out_dim != 2 << m:
            raise ValueError(f"Tx-NN for m={m} needs dims 2 -> {2 << m}, got {net.dims}")
        self.m = m
        self.net = net

    @classmethod
    def create(cls, m: int, rng: np.random.Generator) -> "TxNet":
        width = 2 << m
        return cls(m, DenseNet.create([2, width, width, width], rng))

    def parameters(self) -> list:
        return self.net.parameters()

    def points_graph(self, cond) -> tuple:
        """Normalized points as ``(re, im)`` tensors of length ``2**m``.

        Normalization is part of the graph so gradients see the power constraint.
        """
        out = self.net(as_tensor(np.asarray(cond, dtype=np.float64).reshape(2)))
        pairs = out.reshape(-1, 2)
        re, im = pairs[:, 0], pairs[:, 1]
        power = (re * re + im * im).mean()
        if not power.data > 0:
            raise ConstellationError("Tx-NN produced an all-zero constellation")
        scale = power ** -0.5
        return re * scale, im * scale


class RxNet:
    def __init__(self, m: int, net: DenseNet):
        if net.in_dim != 4 or net.out_dim != m:
            raise ValueError(f"Rx-NN for m={m} needs dims 4 -> {m}, got {net.dims}")
        self.m = m
        self.net = net

    @classmethod
    def create(cls, m: int, rng: np.random.Generator) -> "RxNet":
        width = 2 << m
        return cls(m, DenseNet.create([4, width, width, m], rng))

    def parameters(self) -> list:
        return self.net.parameters()

    def llr_graph(self, xr, xi, cond) -> Tensor:
        xr, xi = as_tensor(xr), as_tensor(xi)
        n = xr.size
        cond = np.broadcast_to(np.asarray(cond, dtype=np.float64).reshape(-1, 2), (n, 2))
        features = concat([xr.reshape(n, 1), xi.reshape(n, 1), Tensor(cond)], axis=1)
        return self.net(features)


def embed_one_hot(bits) -> np.ndarray:
    """``[B, m]`` bits (MSB first) to ``[B, 2**m]`` one-hot rows."""
    bits = np.asarray(bits)
    if bits.ndim != 2:
        raise ValueError("bits must be a [B, m] matrix")
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    idx = bits_to_int(bits)
    out = np.zeros((bits.shape[0], 1 << bits.shape[1]))
    out[np.arange(bits.shape[0]), idx] = 1.0
    return out


def map_symbols_graph(one_hot, pr: Tensor, pi: Tensor) -> tuple:
    one_hot = np.asarray(one_hot, dtype=np.float64)
    return Tensor(one_hot) @ pr, Tensor(one_hot) @ pi


def map_symbols(one_hot, c: Constellation) -> np.ndarray:
    """Dot product of one-hot rows with the label-indexed constellation vector."""
    one_hot = np.asarray(one_hot, dtype=np.float64)
    if one_hot.shape[-1] != c.order:
        raise ValueError(f"one-hot width {one_hot.shape[-1]} != constellation order {c.order}")
    return one_hot @ c.points_by_label()


def tx_constellation(tx: TxNet, params: ChannelParams, scaler: InputScaler) -> Constellation:
    pr, pi = tx.points_graph(scaler(params.sigma_n, params.sigma_phi))
    return Constellation(pr.data + 1j * pi.data)


def demap(rx: RxNet, x_hat, params: ChannelParams, scaler: InputScaler) -> np.ndarray:
    """LLRs ``[B, m]`` for equalized symbols under the condition ``params``."""
    x_hat = np.asarray(x_hat, dtype=np.complex128).reshape(-1)
    return rx.llr_graph(x_hat.real, x_hat.imag, scaler(params.sigma_n, params.sigma_phi)).data


def exact_gaussian_llrs(x_hat, c: Constellation, sigma_n: float) -> np.ndarray:
    """Exact bit LLRs for a circular Gaussian channel with total noise variance ``sigma_n**2``."""
    if not sigma_n > 0:
        raise ValueError("sigma_n must be positive")
    x_hat = np.asarray(x_hat, dtype=np.complex128).reshape(-1)
    m = c.m
    llrs = np.empty((x_hat.size, m))
    chunk = max(1, (1 << 22) // c.order)
    for start in range(0, x_hat.size, chunk):
        y = x_hat[start:start + chunk]
        metric = -np.abs(y[:, None] - c.points[None, :]) ** 2 / sigma_n**2
        for i in range(m):
            zero = c.labels[:, i] == 0
            llrs[start:start + chunk, i] = _logsumexp(metric[:, zero]) - _logsumexp(metric[:, ~zero])
    return llrs


def _logsumexp(a: np.ndarray) -> np.ndarray:
    peak = a.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(a - peak).sum(axis=1, keepdims=True)))[:, 0]


PARAMETERIZED = "parameterized"
ROBUST = "robust"
QAM_DEMAPPER_ONLY = "qam_demapper_only"
MODES = (PARAMETERIZED, ROBUST, QAM_DEMAPPER_ONLY)


class AutoEncoder:
    """Mapper + demapper pair with the conditioning policy of a training mode.

    * ``parameterized``: both nets see the scaled true/assumed channel condition.
    * ``robust``: both nets see the midpoint of the training ranges, always.
    * ``qam_demapper_only``: fixed Gray QAM at the Tx, conditioned Rx-NN.
    """

    def __init__(self, m: int, scaler: InputScaler, rx: RxNet, tx: TxNet | None = None, mode: str = PARAMETERIZED):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if (tx is None) != (mode == QAM_DEMAPPER_ONLY):
            raise ValueError("a Tx-NN is required exactly when the mode is not qam_demapper_only")
        self.m = m
        self.scaler = scaler
        self.rx = rx
        self.tx = tx
        self.mode = mode
        self._qam = None
        if mode == QAM_DEMAPPER_ONLY:
            self._qam = make_square_qam(m)

    @classmethod
    def create(cls, m: int, scaler: InputScaler, rng: np.random.Generator, mode: str = PARAMETERIZED):
        tx = None if mode == QAM_DEMAPPER_ONLY else TxNet.create(m, rng)
        return cls(m, scaler, RxNet.create(m, rng), tx, mode)

    @property
    def is_qam(self) -> bool:
        return self.mode == QAM_DEMAPPER_ONLY

    def parameters(self) -> list:
        return ([] if self.tx is None else self.tx.parameters()) + self.rx.parameters()

    def conditioning(self, params: ChannelParams) -> np.ndarray:
        if self.mode == ROBUST:
            return np.full(2, 0.5)  # scaled midpoint of the training ranges
        return self.scaler(params.sigma_n, params.sigma_phi)

    def points_graph(self, params: ChannelParams) -> tuple:
        """Constellation as ``(re, im)`` tensors indexed by label integer."""
        if self.tx is None:
            pts = self._qam.points_by_label()
            return Tensor(pts.real), Tensor(pts.imag)
        return self.tx.points_graph(self.conditioning(params))

    def constellation(self, params: ChannelParams) -> Constellation:
        if self.tx is None:
            return self._qam
        pr, pi = self.points_graph(params)
        return Constellation(pr.data + 1j * pi.data)

    def llr_graph(self, xr, xi, params: ChannelParams) -> Tensor:
        return self.rx.llr_graph(xr, xi, self.conditioning(params))

    def llrs(self, x_hat, params: ChannelParams) -> np.ndarray:
        x_hat = np.asarray(x_hat, dtype=np.complex128).reshape(-1)
        return self.llr_graph(x_hat.real, x_hat.imag, params).data
