import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pgcs import rng as rngmod
from pgcs.channel import (
    ChannelParams,
    SymbolFrame,
    apply_channel,
    linewidth_to_sigma_phi,
    sample_impairments,
    sample_phase,
    sigma_n_to_snr_db,
    sigma_phi_to_linewidth,
    snr_db_to_sigma_n,
)


@pytest.mark.parametrize("snr, sigma", [(0, 1.0), (20, 0.1), (18, 0.12589254117941673)])
def test_snr_to_sigma(snr, sigma):
    assert snr_db_to_sigma_n(snr) == pytest.approx(sigma, rel=1e-12)


def test_linewidth_to_sigma_phi_examples():
    assert linewidth_to_sigma_phi(0, 32e9) == 0
    assert linewidth_to_sigma_phi(100e3, 32e9) ** 2 == pytest.approx(1.9634954e-5, rel=1e-7)
    assert linewidth_to_sigma_phi(600e3, 32e9) == pytest.approx(1.0854e-2, rel=1e-4)


def test_linewidth_errors():
    with pytest.raises(ValueError):
        linewidth_to_sigma_phi(1e5, 0)
    with pytest.raises(ValueError):
        linewidth_to_sigma_phi(-1, 32e9)


@given(st.floats(-10, 40))
def test_snr_round_trip(snr):
    assert sigma_n_to_snr_db(snr_db_to_sigma_n(snr)) == pytest.approx(snr, abs=1e-9)


@given(st.floats(0, 1e7))
def test_linewidth_round_trip(lw):
    assert sigma_phi_to_linewidth(linewidth_to_sigma_phi(lw, 32e9), 32e9) == pytest.approx(lw, rel=1e-9, abs=1e-6)


@pytest.mark.parametrize("bad", [(-0.1, 0), (0, float("nan")), (float("inf"), 0)])
def test_params_validated(bad):
    with pytest.raises(ValueError):
        ChannelParams(*bad)


def test_identity_channel():
    x = np.exp(1j * np.linspace(0, 3, 50))
    frame = apply_channel(x, ChannelParams(0, 0), np.random.default_rng(0), phi0=0.0)
    assert np.array_equal(frame.z, x)


def test_awgn_variance():
    n, sigma = 1_000_000, 0.1
    frame = apply_channel(np.ones(n), ChannelParams(sigma, 0), rngmod.stream(1, rngmod.NOISE))
    var = np.mean(np.abs(frame.z - np.exp(1j * frame.phi[0])) ** 2)
    assert abs(var - 0.01) < 3e-4
    assert np.all(frame.phi == frame.phi[0])


def test_wiener_increments_white_with_right_variance():
    # Tight check on the generating process: 10^7 increments.
    sigma = 0.01
    inc = np.concatenate(
        [np.diff(sample_phase(100_000, sigma, rngmod.stream(2, rngmod.PHASE, t))) for t in range(100)]
    )
    ratio = np.mean(inc**2) / sigma**2
    assert abs(ratio - 1) < 5 * math.sqrt(2 / inc.size)
    lag1 = np.mean(inc[1:] * inc[:-1]) / sigma**2
    assert abs(lag1) < 5 / math.sqrt(inc.size)


def test_phase_start_uniform_and_forced():
    starts = np.array([sample_phase(2, 0.0, np.random.default_rng(s))[0] for s in range(2000)])
    assert starts.min() >= 0 and starts.max() < 2 * math.pi
    assert abs(starts.mean() - math.pi) < 0.15
    phi = sample_phase(10, 0.1, np.random.default_rng(0), phi0=0.3)
    assert phi[0] == 0.3


def test_impairments_reproducible_from_streams():
    params = ChannelParams(0.1, 0.01)
    a = sample_impairments(100, params, rngmod.stream(3, rngmod.NOISE), rngmod.stream(3, rngmod.PHASE))
    b = sample_impairments(100, params, rngmod.stream(3, rngmod.NOISE), rngmod.stream(3, rngmod.PHASE))
    assert np.array_equal(a.noise, b.noise) and np.array_equal(a.phi, b.phi)


def test_frame_length_check():
    with pytest.raises(ValueError):
        SymbolFrame(np.zeros(3), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        apply_channel([], ChannelParams(0, 0), np.random.default_rng(0))


def test_from_physical():
    p = ChannelParams.from_physical(20, 100e3)
    assert p.sigma_n == pytest.approx(0.1) and p.sigma_phi == pytest.approx(math.sqrt(1.9634954e-5))
