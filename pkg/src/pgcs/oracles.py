"""Independent reference computations used by the self-test and the test-suite.

Nothing here shares code with the fast paths it checks: the BPS reference is a
full brute-force search, the bitwise mutual information comes from Gauss-Hermite quadrature
of per-axis PAM mixtures, and gradients are central finite differences.
"""

from __future__ import annotations

import math

import numpy as np

from .constellation import gray_code, int_to_bits


def reference_bps_hard(z, points, angles, window_size: int):
    """Brute-force BPS: ``(theta_index, x_hat)`` with lowest-index tie breaking.

    Every rotated symbol is compared with every point, and the window sums are
    taken as an explicit band-matrix product instead of running sums.
    """
    z = np.asarray(z, dtype=np.complex128).reshape(-1)
    points = np.asarray(points, dtype=np.complex128).reshape(-1)
    angles = np.asarray(angles, dtype=np.float64)
    n = z.size
    rotated = z[:, None] * np.exp(1j * angles)[None, :]
    dist = (np.abs(rotated[:, :, None] - points[None, None, :]) ** 2).min(axis=2)
    before = window_size // 2
    after = (window_size + 1) // 2 - 1
    k = np.arange(n)
    band = ((k[None, :] >= k[:, None] - before) & (k[None, :] <= k[:, None] + after)).astype(np.float64)
    best = np.argmin(band @ dist, axis=1)
    return best, z * np.exp(1j * angles[best])


def naive_window_sum(d, window_size: int) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    before = window_size // 2
    after = (window_size + 1) // 2 - 1
    out = np.zeros_like(d)
    for k in range(n):
        for i in range(k - before, k + after + 1):
            if 0 <= i < n:
                out[k] += d[i]
    return out


def _pam_bitwise_mi(levels: np.ndarray, labels: np.ndarray, sigma: float, nodes: int) -> float:
    """Sum over bits of I(b; y) for 1-D PAM ``y = a + sigma*w``, equiprobable levels."""
    u, w = np.polynomial.hermite.hermgauss(nodes)
    w = w / math.sqrt(math.pi)
    total = 0.0
    for a in levels:
        y = a + math.sqrt(2.0) * sigma * u  # [nodes]
        logp = -((y[:, None] - levels[None, :]) ** 2) / (2 * sigma**2)
        peak = logp.max(axis=1, keepdims=True)
        dens = np.exp(logp - peak)
        denom = dens.sum(axis=1)
        a_idx = int(np.flatnonzero(levels == a)[0])
        for bit in range(labels.shape[1]):
            same = labels[:, bit] == labels[a_idx, bit]
            posterior = dens[:, same].sum(axis=1) / denom
            total += np.sum(w * -np.log2(posterior))
    n_bits = labels.shape[1]
    return n_bits - total / len(levels)


def square_qam_bmi_quadrature(m: int, snr_db: float, nodes: int = 150) -> float:
    """BMI of Gray square QAM (or BPSK for m=1) on AWGN with ``SNR = Es / sigma_n**2``."""
    sigma_n = 10.0 ** (-snr_db / 20.0)
    if m == 1:
        return _pam_bitwise_mi(np.array([-1.0, 1.0]), np.array([[0], [1]]), sigma_n / math.sqrt(2.0), nodes)
    half = m // 2
    side = 1 << half
    levels = (2 * np.arange(side) - (side - 1)).astype(np.float64)
    levels /= math.sqrt(2.0 * np.mean(levels**2))  # unit energy over both axes
    labels = int_to_bits(gray_code(half), half)
    per_axis = _pam_bitwise_mi(levels, labels, sigma_n / math.sqrt(2.0), nodes)
    return 2.0 * per_axis


def symbol_mi_monte_carlo(points, sigma_n: float, n: int, rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of I(X;Y) in bits for equiprobable ``points`` on AWGN."""
    points = np.asarray(points, dtype=np.complex128)
    order = points.size
    idx = rng.integers(0, order, size=n)
    noise = sigma_n / math.sqrt(2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    total = 0.0
    chunk = 1 << 16
    for s in range(0, n, chunk):
        x = points[idx[s:s + chunk]]
        y = x + noise[s:s + chunk]
        d_true = np.abs(y - x) ** 2
        d_all = np.abs(y[:, None] - points[None, :]) ** 2
        e = -(d_all - d_true[:, None]) / sigma_n**2
        peak = e.max(axis=1, keepdims=True)
        total += np.sum((peak[:, 0] + np.log(np.exp(e - peak).sum(axis=1))) / math.log(2.0))
    return math.log2(order) - total / n


def central_difference(f, x: np.ndarray, index, h: float = 1e-5) -> float:
    """``(f(x + h e_i) - f(x - h e_i)) / 2h`` with ``x`` restored afterwards."""
    original = x[index]
    x[index] = original + h
    up = f()
    x[index] = original - h
    down = f()
    x[index] = original
    return (up - down) / (2.0 * h)
