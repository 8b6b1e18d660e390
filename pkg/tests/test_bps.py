import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgcs.bps import (
    BpsConfig,
    bps_hard,
    bps_soft,
    bps_soft_graph,
    distance_metric,
    edge_mask,
    resolve_ambiguity_genie,
    soft_weights,
    test_angles,
    window_bounds,
    windowed_cost,
)
from pgcs.constellation import Constellation, make_square_qam, normalize
from pgcs.nnkit import Tensor, grad
from pgcs.oracles import central_difference, naive_window_sum, reference_bps_hard
from pgcs.selftest import cost_margin, unique_minimizer_frame

QPSK = make_square_qam(2)
QAM_GRID = BpsConfig(angle_min=-math.pi / 4, angle_max=math.pi / 4)


def test_angle_grid_half_open():
    a = test_angles(BpsConfig(num_test_angles=4, angle_min=0.0, angle_max=1.0))
    np.testing.assert_allclose(a, [0, 0.25, 0.5, 0.75])


@pytest.mark.parametrize(
    "kwargs",
    [dict(num_test_angles=1), dict(window_size=0), dict(angle_min=1.0, angle_max=1.0), dict(temperature=0.0), dict(mode="x")],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        BpsConfig(**kwargs)


def test_window_bounds():
    assert window_bounds(128) == (64, 63)
    assert window_bounds(3) == (1, 1)
    assert window_bounds(1) == (0, 0)
    assert window_bounds(4) == (2, 1)


def test_edge_mask():
    mask = edge_mask(10, 4)
    assert mask.tolist() == [True, True] + [False] * 6 + [True, True]
    assert edge_mask(5, 20).all()
    assert not edge_mask(5, 1).any()


def test_distance_zero_on_point():
    z = QPSK.points
    d = distance_metric(z, QPSK, np.array([-0.3, 0.0, 0.4]))
    assert np.all(d[:, 1] == 0)
    assert np.all(d.argmin(axis=1) == 1)


def test_distance_closed_form_qpsk():
    d = distance_metric([1.0], QPSK, np.array([0.0, math.pi / 4]))
    np.testing.assert_allclose(d[0], [2 - math.sqrt(2), 0.0], atol=1e-12)
    assert d[0, 0] == pytest.approx(0.58578644, abs=1e-8)


def test_distance_row_shifts_with_rotation():
    config = BpsConfig(num_test_angles=12, angle_min=-math.pi / 4, angle_max=math.pi / 4)
    angles = config.angles
    step = angles[1] - angles[0]
    z = np.random.default_rng(0).standard_normal(20) * (1 + 1j)
    d = distance_metric(z, QPSK, angles)
    d_rot = distance_metric(z * np.exp(1j * step), QPSK, angles)
    np.testing.assert_allclose(d_rot, np.roll(d, -1, axis=1), atol=1e-12)


def test_windowed_cost_examples():
    d = np.random.default_rng(1).random((7, 3))
    np.testing.assert_array_equal(windowed_cost(d, 1), d)
    small = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(windowed_cost(small, 3)[:, 0], [3, 6, 5])


def test_windowed_cost_matches_naive():
    d = np.random.default_rng(2).random((200, 60))
    for n in (1, 2, 17, 64, 128, 500):
        np.testing.assert_allclose(windowed_cost(d, n), naive_window_sum(d, n), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 80), st.integers(1, 100), st.integers(0, 2**31 - 1))
def test_windowed_cost_property(b, n, seed):
    d = np.random.default_rng(seed).random((b, 3))
    np.testing.assert_allclose(windowed_cost(d, n), naive_window_sum(d, n), atol=1e-9)


def test_hard_recovers_constant_rotation():
    config = QAM_GRID.with_(window_size=32)
    z = np.tile(QPSK.points, 50) * np.exp(-0.2j)
    _, theta = bps_hard(z, QPSK, config)
    nearest = config.angles[np.argmin(np.abs(config.angles - 0.2))]
    interior = ~edge_mask(z.size, 32)
    assert np.all(theta[interior] == nearest)
    idx, _ = reference_bps_hard(z, QPSK.points, config.angles, 32)
    assert np.array_equal(config.angles[idx], theta)


def test_hard_identity_on_clean_points():
    c = make_square_qam(4)
    x = np.random.default_rng(3).choice(c.points, 300)
    x_hat, theta = bps_hard(x, c, QAM_GRID)
    assert np.all(theta == QAM_GRID.angles[np.argmin(np.abs(QAM_GRID.angles))])
    np.testing.assert_allclose(x_hat, x, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hard_matches_reference(seed):
    rng = np.random.default_rng(seed)
    m, b, t, n = rng.integers(1, 5), rng.integers(1, 120), rng.integers(2, 40), rng.integers(1, 70)
    c = Constellation(rng.standard_normal(2**m) + 1j * rng.standard_normal(2**m))
    z = rng.standard_normal(b) + 1j * rng.standard_normal(b)
    config = BpsConfig(num_test_angles=int(t), window_size=int(n))
    idx, x_ref = reference_bps_hard(z, c.points, config.angles, int(n))
    x_hat, theta = bps_hard(z, c, config)
    assert np.array_equal(theta, config.angles[idx])
    assert np.array_equal(x_hat, x_ref)


def test_hard_tie_breaks_to_lowest_index():
    # Full circle grid and a QPSK constellation: angles pi/2 apart tie exactly.
    z = np.ones(5, dtype=complex) * QPSK.points[0]
    config = BpsConfig(num_test_angles=4, angle_min=0.0, angle_max=2 * math.pi, window_size=3)
    _, theta = bps_hard(z, QPSK, config)
    assert np.all(theta == 0.0)


def test_soft_infinite_temperature_is_mean_rotation():
    z = np.random.default_rng(4).standard_normal(40) * (1 - 0.5j)
    config = QAM_GRID.with_(mode="soft", temperature=1e12, window_size=8)
    expected = z * np.mean(np.exp(1j * config.angles))
    np.testing.assert_allclose(bps_soft(z, QPSK, config), expected, atol=1e-9)
    np.testing.assert_allclose(soft_weights(z, QPSK, config), 1 / config.num_test_angles, atol=1e-12)


def test_soft_tiny_temperature_equals_hard():
    z, c, config = unique_minimizer_frame()
    assert cost_margin(z, c, config) > 0
    hard, _ = bps_hard(z, c, config)
    soft = bps_soft(z, c, config.with_(mode="soft", temperature=1e-6))
    assert np.max(np.abs(soft - hard)) < 1e-6


def test_soft_weights_are_distributions():
    z = np.random.default_rng(5).standard_normal(64) + 0j
    w = soft_weights(z, QPSK, QAM_GRID.with_(mode="soft", temperature=0.3, window_size=16))
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(w >= 0)


def test_soft_gradient_wrt_constellation_matches_fd():
    rng = np.random.default_rng(6)
    pts = normalize(Constellation(rng.standard_normal(64) + 1j * rng.standard_normal(64))).points
    cr, ci = pts.real.copy(), pts.imag.copy()
    z = rng.choice(pts, 200) * np.exp(1j * 0.1) + 0.05 * (rng.standard_normal(200) + 1j * rng.standard_normal(200))
    config = BpsConfig(num_test_angles=30, window_size=32, mode="soft", temperature=0.1)

    def loss(cr_t, ci_t):
        xr, xi, _ = bps_soft_graph(Tensor(z.real), Tensor(z.imag), cr_t, ci_t, config)
        return (xr * xr + xi * xi).sum()

    tr, ti = Tensor(cr, requires_grad=True), Tensor(ci, requires_grad=True)
    gr, gi = grad(loss(tr, ti), [tr, ti])
    for arr, g in ((cr, gr), (ci, gi)):
        for i in rng.choice(64, 12, replace=False):
            fd = central_difference(lambda: loss(Tensor(cr), Tensor(ci)).item(), arr, i)
            assert abs(fd - g[i]) <= 1e-4 * max(abs(fd), abs(g[i])), (i, fd, g[i])


def test_genie_resolves_quarter_turns():
    c = make_square_qam(4)
    x = np.random.default_rng(7).choice(c.points, 100)
    for k in range(4):
        rotated = x * np.exp(1j * k * math.pi / 2)
        np.testing.assert_allclose(resolve_ambiguity_genie(rotated, x), x, atol=1e-12)


def test_unwrap_option():
    c = make_square_qam(4)
    t = np.linspace(0, 3, 2000)
    rng = np.random.default_rng(8)
    x = rng.choice(c.points, t.size)
    z = x * np.exp(-1j * t)
    _, wrapped = bps_hard(z, c, QAM_GRID.with_(window_size=32))
    _, unwrapped = bps_hard(z, c, QAM_GRID.with_(window_size=32, unwrap_period=math.pi / 2))
    assert wrapped.max() < math.pi / 4
    assert np.max(np.abs(np.diff(unwrapped))) < 0.1
    assert unwrapped[-100:].mean() == pytest.approx(3.0 - 100 / 2000 * 1.5, abs=0.1)
