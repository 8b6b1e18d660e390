"""End-to-end training of the conditioned auto-encoder through the soft BPS."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng as rngmod
from .bps import SOFT, BpsConfig, bps_hard, bps_soft_graph, edge_mask, resolve_ambiguity_genie
from .channel import (
    ChannelParams,
    linewidth_to_sigma_phi,
    sample_impairments,
    snr_db_to_sigma_n,
)
from .nnkit import AdamState, adam_step, bce_with_logits, grad
from .nnkit.losses import NATS_PER_BIT
from .shaping import MODES, PARAMETERIZED, AutoEncoder, InputScaler, embed_one_hot, map_symbols_graph

log = logging.getLogger(__name__)

SIGMA_SAMPLING = "sigma"
DB_SAMPLING = "db"


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, params: ChannelParams, value: float):
        self.epoch, self.batch, self.params, self.value = epoch, batch, params, value
        super().__init__(
            f"non-finite loss {value} at epoch {epoch}, batch {batch} "
            f"(sigma_n={params.sigma_n:.6g}, sigma_phi={params.sigma_phi:.6g})"
        )


@dataclass(frozen=True)
class TrainConfig:
    m: int = 6
    epochs: int = 1000
    batches_per_epoch: int = 10
    batch_start: int = 1000
    batch_end: int = 10000
    snr_db_range: tuple = (14.0, 25.0)
    linewidth_range_hz: tuple = (50e3, 600e3)
    symbol_rate: float = 32e9
    bps: BpsConfig = field(default_factory=BpsConfig)
    temp_start: float = 1.0
    temp_end: float = 0.001
    learning_rate: float = 1e-3
    seed: int = 0
    mode: str = PARAMETERIZED
    sampling: str = SIGMA_SAMPLING

    def __post_init__(self):
        object.__setattr__(self, "snr_db_range", tuple(float(v) for v in self.snr_db_range))
        object.__setattr__(self, "linewidth_range_hz", tuple(float(v) for v in self.linewidth_range_hz))
        if not 1 <= self.m <= 10:
            raise ValueError(f"m must be in [1, 10], got {self.m}")
        if self.epochs < 1 or self.batches_per_epoch < 1:
            raise ValueError("epochs and batches_per_epoch must be >= 1")
        for name in ("snr_db_range", "linewidth_range_hz"):
            lo, hi = getattr(self, name)
            if len(getattr(self, name)) != 2 or lo > hi:
                raise ValueError(f"{name} must be an ordered pair")
        if self.linewidth_range_hz[0] < 0:
            raise ValueError("linewidths must be >= 0")
        if self.symbol_rate <= 0:
            raise ValueError("symbol_rate must be positive")
        if not 0 < self.temp_end <= self.temp_start:
            raise ValueError("need 0 < temp_end <= temp_start")
        if not self.bps.window_size <= self.batch_start <= self.batch_end:
            raise ValueError("need window_size <= batch_start <= batch_end")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.sampling not in (SIGMA_SAMPLING, DB_SAMPLING):
            raise ValueError(f"sampling must be 'sigma' or 'db', got {self.sampling!r}")
        if self.mode == "qam_demapper_only" and self.m % 2:
            raise ValueError("the square-QAM baseline needs an even m")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def scaler(self) -> InputScaler:
        return InputScaler(
            snr_db_to_sigma_n(self.snr_db_range[1]),
            snr_db_to_sigma_n(self.snr_db_range[0]),
            linewidth_to_sigma_phi(self.linewidth_range_hz[0], self.symbol_rate),
            linewidth_to_sigma_phi(self.linewidth_range_hz[1], self.symbol_rate),
        )


@dataclass
class EpochMetrics:
    epoch: int
    batch_size: int
    temperature: float
    bce_bits: float
    bmi_bits: float


@dataclass
class TrainState:
    config: TrainConfig
    model: AutoEncoder
    adam: AdamState
    epoch: int = 0  # number of completed epochs

    @classmethod
    def initial(cls, config: TrainConfig) -> "TrainState":
        model = AutoEncoder.create(config.m, config.scaler(), rngmod.stream(config.seed, rngmod.INIT), config.mode)
        adam = AdamState.zeros_like([p.data for p in model.parameters()], lr=config.learning_rate)
        return cls(config, model, adam)


def sample_channel_params(config: TrainConfig, rng: np.random.Generator) -> ChannelParams:
    """One ``(sigma_n, sigma_phi)`` draw, uniform in the sigma domain by default."""
    snr_lo, snr_hi = config.snr_db_range
    lw_lo, lw_hi = config.linewidth_range_hz
    if config.sampling == DB_SAMPLING:
        snr = rng.uniform(snr_lo, snr_hi) if snr_hi > snr_lo else snr_lo
        lw = rng.uniform(lw_lo, lw_hi) if lw_hi > lw_lo else lw_lo
        return ChannelParams(snr_db_to_sigma_n(snr), linewidth_to_sigma_phi(lw, config.symbol_rate))
    sc = config.scaler()
    sigma_n = rng.uniform(sc.sigma_n_min, sc.sigma_n_max) if sc.sigma_n_max > sc.sigma_n_min else sc.sigma_n_min
    sigma_phi = (
        rng.uniform(sc.sigma_phi_min, sc.sigma_phi_max) if sc.sigma_phi_max > sc.sigma_phi_min else sc.sigma_phi_min
    )
    return ChannelParams(sigma_n, sigma_phi)


def schedule(epoch: int, config: TrainConfig) -> tuple:
    """``(batch_size, temperature)``: batch size linear, temperature log-linear in epoch."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    frac = epoch / (config.epochs - 1) if config.epochs > 1 else 1.0  # a lone epoch is the last one
    size = config.batch_start + frac * (config.batch_end - config.batch_start)
    batch_size = max(int(math.floor(size + 0.5)), config.bps.window_size)
    if epoch == config.epochs - 1:
        temperature = config.temp_end
    else:
        temperature = config.temp_start * (config.temp_end / config.temp_start) ** frac
    return batch_size, temperature


def qam_bps_config(bps: BpsConfig) -> BpsConfig:
    """Grid over one symmetry period of square QAM; unwrapping stays as configured."""
    return bps.with_(angle_min=-math.pi / 4, angle_max=math.pi / 4, mode="hard")


def batch_loss(state: TrainState, epoch: int, batch: int, batch_size: int, temperature: float):
    """Build the graph for one batch. Returns ``(loss_nats, params)``."""
    config, model = state.config, state.model
    seed = config.seed
    params = sample_channel_params(config, rngmod.stream(seed, rngmod.PARAMS, epoch, batch))
    bits = rngmod.stream(seed, rngmod.BITS, epoch, batch).integers(0, 2, size=(batch_size, config.m))
    imp = sample_impairments(
        batch_size,
        params,
        rngmod.stream(seed, rngmod.NOISE, epoch, batch),
        rngmod.stream(seed, rngmod.PHASE, epoch, batch),
    )
    mask = ~edge_mask(batch_size, config.bps.window_size)

    pr, pi = model.points_graph(params)
    xr, xi = map_symbols_graph(embed_one_hot(bits), pr, pi)
    if model.is_qam:
        x = xr.data + 1j * xi.data
        z = (x + imp.noise) * np.exp(1j * imp.phi)
        x_hat, _ = bps_hard(z, model.constellation(params), qam_bps_config(config.bps))
        x_hat = resolve_ambiguity_genie(x_hat, x, mask=mask)
        xhr, xhi = x_hat.real, x_hat.imag
    else:
        cos_p, sin_p = np.cos(imp.phi), np.sin(imp.phi)
        ar = xr + imp.noise.real
        ai = xi + imp.noise.imag
        zr = ar * cos_p - ai * sin_p
        zi = ar * sin_p + ai * cos_p
        soft = config.bps.with_(mode=SOFT, temperature=temperature)
        xhr, xhi, _ = bps_soft_graph(zr, zi, pr, pi, soft)
    llrs = model.llr_graph(xhr, xhi, params)
    return bce_with_logits(llrs, bits, mask), params


def train_step(state: TrainState, epoch: int, batch: int, batch_size: int, temperature: float) -> float:
    loss, params = batch_loss(state, epoch, batch, batch_size, temperature)
    value = loss.item()
    if not math.isfinite(value):
        raise NonFiniteLossError(epoch, batch, params, value)
    tensors = state.model.parameters()
    grads = grad(loss, tensors)
    new, _ = adam_step([t.data for t in tensors], grads, state.adam)
    for t, v in zip(tensors, new):
        t.data = v
    return value


def train_epoch(state: TrainState) -> EpochMetrics:
    config = state.config
    epoch = state.epoch
    batch_size, temperature = schedule(epoch, config)
    losses = [train_step(state, epoch, b, batch_size, temperature) for b in range(config.batches_per_epoch)]
    bce = float(np.mean(losses)) / NATS_PER_BIT
    state.epoch += 1
    # same clamp at zero as the evaluation estimator
    return EpochMetrics(epoch, batch_size, temperature, bce, max(config.m * (1.0 - bce), 0.0))


def train(
    config: TrainConfig,
    state: Optional[TrainState] = None,
    until_epoch: Optional[int] = None,
    on_epoch: Optional[Callable[[TrainState, EpochMetrics], None]] = None,
) -> tuple:
    """Run (or resume) training up to ``until_epoch`` (default: all epochs).

    Returns ``(state, [EpochMetrics, ...])`` for the epochs run in this call.
    """
    state = TrainState.initial(config) if state is None else state
    stop = config.epochs if until_epoch is None else min(until_epoch, config.epochs)
    history = []
    while state.epoch < stop:
        metrics = train_epoch(state)
        log.info(
            "epoch %d batch=%d temp=%.4g bce=%.5f bmi=%.4f",
            metrics.epoch, metrics.batch_size, metrics.temperature, metrics.bce_bits, metrics.bmi_bits,
        )
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(state, metrics)
    return state, history
