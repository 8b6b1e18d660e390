"""AWGN plus Wiener phase-noise channel and the SNR/linewidth conventions.

Conventions (unit mean symbol energy):

* ``SNR = 1 / sigma_n**2`` with ``sigma_n**2`` the total complex noise variance.
* ``sigma_phi**2 = 2*pi*linewidth / symbol_rate`` per symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ChannelParams:
    sigma_n: float
    sigma_phi: float

    def __post_init__(self):
        for name in ("sigma_n", "sigma_phi"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_physical(cls, snr_db: float, linewidth_hz: float, symbol_rate: float = 32e9) -> "ChannelParams":
        return cls(snr_db_to_sigma_n(snr_db), linewidth_to_sigma_phi(linewidth_hz, symbol_rate))


@dataclass
class Impairments:
    """One realization of the channel randomness for a frame of ``B`` symbols."""

    noise: np.ndarray  # complex, total variance sigma_n**2
    phi: np.ndarray  # phase trajectory in radians

    def __len__(self):
        return self.noise.size


@dataclass
class SymbolFrame:
    x: np.ndarray
    z: np.ndarray
    phi: np.ndarray
    x_hat: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.x)
        arrays = [self.z, self.phi] + ([self.x_hat] if self.x_hat is not None else [])
        if any(len(a) != n for a in arrays):
            raise ValueError("all frame arrays must have the same length")

    def __len__(self):
        return len(self.x)


def snr_db_to_sigma_n(snr_db: float) -> float:
    return 10.0 ** (-float(snr_db) / 20.0)


def sigma_n_to_snr_db(sigma_n: float) -> float:
    return -20.0 * math.log10(sigma_n)


def linewidth_to_sigma_phi(linewidth_hz: float, symbol_rate_baud: float) -> float:
    if not symbol_rate_baud > 0:
        raise ValueError(f"symbol rate must be positive, got {symbol_rate_baud}")
    if linewidth_hz < 0:
        raise ValueError(f"linewidth must be >= 0, got {linewidth_hz}")
    return math.sqrt(2.0 * math.pi * linewidth_hz / symbol_rate_baud)


def sigma_phi_to_linewidth(sigma_phi: float, symbol_rate_baud: float) -> float:
    return sigma_phi**2 * symbol_rate_baud / (2.0 * math.pi)


def sample_noise(n: int, sigma_n: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with total variance ``sigma_n**2``."""
    scale = sigma_n / math.sqrt(2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def sample_phase(n: int, sigma_phi: float, rng: np.random.Generator, phi0: Optional[float] = None) -> np.ndarray:
    """Wiener phase trajectory with a uniform random start unless ``phi0`` is given."""
    start = rng.uniform(0.0, 2.0 * math.pi) if phi0 is None else float(phi0)
    increments = sigma_phi * rng.standard_normal(n - 1)
    phi = np.empty(n)
    phi[0] = 0.0
    np.cumsum(increments, out=phi[1:])
    return phi + start


def sample_impairments(
    n: int,
    params: ChannelParams,
    noise_rng: np.random.Generator,
    phase_rng: Optional[np.random.Generator] = None,
    phi0: Optional[float] = None,
) -> Impairments:
    phase_rng = noise_rng if phase_rng is None else phase_rng
    noise = sample_noise(n, params.sigma_n, noise_rng)
    phi = sample_phase(n, params.sigma_phi, phase_rng, phi0)
    return Impairments(noise, phi)


def apply_impairments(x: np.ndarray, imp: Impairments) -> np.ndarray:
    return (x + imp.noise) * np.exp(1j * imp.phi)


def apply_channel(
    x,
    params: ChannelParams,
    rng: np.random.Generator,
    phi0: Optional[float] = None,
    phase_rng: Optional[np.random.Generator] = None,
) -> SymbolFrame:
    """Send ``x`` through ``z_k = (x_k + n_k) * exp(1j*phi_k)``."""
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    if x.size == 0:
        raise ValueError("x must be nonempty")
    imp = sample_impairments(x.size, params, rng, phase_rng, phi0)
    return SymbolFrame(x=x, z=apply_impairments(x, imp), phi=imp.phi)
