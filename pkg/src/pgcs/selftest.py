"""Fast oracle-equivalence and gradient checks at fixed seeds.

Each check returns a short detail string on success and raises
``AssertionError`` on failure.  :func:`run_selftest` times every check and
keeps going after a failure so the report names all of them.
"""

from __future__ import annotations

import contextlib
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bps as bpsmod
from .bps import HARD, SOFT, BpsConfig, bps_hard, bps_soft, windowed_cost
from .channel import sample_noise, sample_phase
from .constellation import Constellation, make_square_qam
from .evalsuite import estimate_bmi
from .nnkit import grad
from .oracles import naive_window_sum, reference_bps_hard, square_qam_bmi_quadrature
from .shaping import exact_gaussian_llrs
from .trainer import TrainConfig, TrainState, batch_loss

SOFT_BPS_GRAD = "soft-bps-grad"
FAULTS = (SOFT_BPS_GRAD,)
TIME_BUDGET_S = 300.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    detail: str


def random_bps_instance(rng: np.random.Generator, max_b=256, max_m=4, max_t=60, max_n=128):
    """Random (z, constellation, config) with sizes drawn up to the given limits."""
    m = int(rng.integers(1, max_m + 1))
    b = int(rng.integers(1, max_b + 1))
    t = int(rng.integers(2, max_t + 1))
    n = int(rng.integers(1, max_n + 1))
    pts = rng.standard_normal(2**m) + 1j * rng.standard_normal(2**m)
    z = rng.standard_normal(b) + 1j * rng.standard_normal(b)
    return z, Constellation(pts), BpsConfig(num_test_angles=t, window_size=n)


def check_bps_bruteforce(instances: int = 200, seed: int = 11) -> str:
    rng = np.random.default_rng(seed)
    for i in range(instances):
        z, c, config = random_bps_instance(rng)
        ref_idx, _ = reference_bps_hard(z, c.points, config.angles, config.window_size)
        _, theta = bps_hard(z, c, config)
        idx = np.searchsorted(config.angles, theta)
        assert np.array_equal(idx, ref_idx), f"argmin differs on instance {i}"
        d = rng.random((z.size, config.num_test_angles))
        assert np.allclose(windowed_cost(d, config.window_size), naive_window_sum(d, config.window_size))
    return f"{instances} instances agree"


def unique_minimizer_frame(seed: int = 5, n: int = 512, snr_db: float = 25.0):
    """A 16-QAM frame whose windowed cost has a clear winner at every symbol.

    The channel phase is constant and sits exactly on a (coarse) test angle.
    """
    rng = np.random.default_rng(seed)
    c = make_square_qam(4)
    config = BpsConfig(num_test_angles=16, angle_min=-math.pi / 4, angle_max=math.pi / 4, window_size=64)
    x = c.points[rng.integers(0, c.order, size=n)]
    z = (x + sample_noise(n, 10 ** (-snr_db / 20), rng)) * np.exp(-1j * config.angles[5])
    return z, c, config


def cost_margin(z, c: Constellation, config: BpsConfig) -> float:
    """Smallest gap between the best and second-best windowed cost over the frame."""
    cost = windowed_cost(bpsmod.distance_metric(z, c, config.angles), config.window_size)
    part = np.partition(cost, 1, axis=1)
    return float(np.min(part[:, 1] - part[:, 0]))


def soft_hard_deviations(z, c, config, temperatures=(1.0, 0.1, 0.01, 0.001)) -> list:
    hard, _ = bps_hard(z, c, config.with_(mode=HARD))
    return [
        float(np.max(np.abs(bps_soft(z, c, config.with_(mode=SOFT, temperature=t)) - hard)))
        for t in temperatures
    ]


def check_soft_to_hard() -> str:
    z, c, config = unique_minimizer_frame()
    margin = cost_margin(z, c, config)
    assert margin > 0.05, f"frame has no clear unique minimizer (margin {margin:.3g})"
    dev = soft_hard_deviations(z, c, config)
    assert all(a > b for a, b in zip(dev, dev[1:])), f"deviation not decreasing: {dev}"
    assert dev[-1] < 1e-6, f"deviation at T=0.001 is {dev[-1]:.3g}"
    return f"deviation {dev[0]:.2e} -> {dev[-1]:.2e}"


def gradient_errors(coords: int | None = 100, seed: int = 7, temperature: float = 1.0) -> np.ndarray:
    """Relative error of pipeline gradients against central differences.

    End-to-end loss: Tx-NN, channel, soft BPS, Rx-NN and masked BCE for m=3,
    B=64 and a window of 16 so that the edge mask leaves symbols to score.
    ``coords=None`` checks every parameter coordinate.
    """
    config = TrainConfig(
        m=3, epochs=1, batch_start=64, batch_end=64, bps=BpsConfig(window_size=16), seed=seed
    )
    state = TrainState.initial(config)
    tensors = state.model.parameters()
    loss, _ = batch_loss(state, 0, 0, 64, temperature)
    analytic = grad(loss, tensors)

    sizes = np.array([t.data.size for t in tensors])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    if coords is None:
        picks = np.arange(offsets[-1])
    else:
        picks = np.random.default_rng(seed).choice(offsets[-1], size=coords, replace=False)
    h = 1e-5
    errors = np.empty(picks.size)
    for n, flat in enumerate(picks):
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        j = int(flat - offsets[i])
        x = tensors[i].data.reshape(-1)
        orig = x[j]
        x[j] = orig + h
        up = batch_loss(state, 0, 0, 64, temperature)[0].item()
        x[j] = orig - h
        down = batch_loss(state, 0, 0, 64, temperature)[0].item()
        x[j] = orig
        fd = (up - down) / (2 * h)
        g = analytic[i].reshape(-1)[j]
        errors[n] = abs(g - fd) / max(abs(g), abs(fd), 1e-300)
    return errors


def check_gradients() -> str:
    errors = gradient_errors(coords=40)
    worst = float(errors.max())
    assert worst <= 1e-4, f"{int((errors > 1e-4).sum())} of {errors.size} coordinates off, worst rel err {worst:.3g}"
    return f"worst rel err {worst:.2e}"


def check_bmi_oracle(n: int = 200_000, seed: int = 3) -> str:
    rng = np.random.default_rng(seed)
    out = []
    for m, snr_db in ((2, 8.0), (4, 14.0)):
        c = make_square_qam(m)
        labels = rng.integers(0, c.order, size=n)
        x = c.points_by_label()[labels]
        sigma_n = 10 ** (-snr_db / 20)
        y = x + sample_noise(n, sigma_n, rng)
        bits = (labels[:, None] >> np.arange(m - 1, -1, -1)) & 1
        est = estimate_bmi(exact_gaussian_llrs(y, c, sigma_n), bits)
        ref = square_qam_bmi_quadrature(m, snr_db)
        assert abs(est - ref) < 0.01, f"m={m}: {est:.4f} vs quadrature {ref:.4f}"
        out.append(f"m={m} {est:.4f}/{ref:.4f}")
    return ", ".join(out)


def check_channel_stats(seed: int = 9) -> str:
    rng = np.random.default_rng(seed)
    n, sigma_n = 200_000, 0.3
    noise = sample_noise(n, sigma_n, rng)
    var = float(np.mean(np.abs(noise) ** 2))
    # standard error of a mean of exponential(sigma^2) variables is sigma^2/sqrt(n)
    assert abs(var - sigma_n**2) < 3 * sigma_n**2 / math.sqrt(n), f"AWGN variance {var:.5g}"
    sigma_phi, steps, lag = 0.01, 20_000, 1000
    phi = sample_phase(steps, sigma_phi, rng)
    diffs = phi[lag:] - phi[:-lag]
    ratio = float(np.var(diffs) / (lag * sigma_phi**2))
    assert abs(ratio - 1) < 0.25, f"Wiener variance ratio {ratio:.3f}"
    return f"awgn {var / sigma_n**2:.4f}, wiener {ratio:.3f}"


CHECKS: dict[str, Callable[[], str]] = {
    "bps-bruteforce": check_bps_bruteforce,
    "soft-to-hard": check_soft_to_hard,
    "gradient-fd": check_gradients,
    "bmi-oracle": check_bmi_oracle,
    "channel-stats": check_channel_stats,
}


@contextlib.contextmanager
def injected_fault(name: str | None):
    if name is None:
        yield
        return
    if name != SOFT_BPS_GRAD:
        raise ValueError(f"unknown fault {name!r}; choose from {FAULTS}")
    saved = bpsmod._SOFT_GRAD_SCALE
    bpsmod._SOFT_GRAD_SCALE = 1.1
    try:
        yield
    finally:
        bpsmod._SOFT_GRAD_SCALE = saved


def run_selftest(fault: str | None = None, report: Callable[[str], None] = print) -> list:
    results = []
    with injected_fault(fault):
        for name, check in CHECKS.items():
            start = time.perf_counter()
            try:
                detail, passed = check(), True
            except AssertionError as exc:
                detail, passed = str(exc), False
            result = CheckResult(name, passed, time.perf_counter() - start, detail)
            results.append(result)
            report(f"{'PASS' if passed else 'FAIL'} {name:<15} {result.seconds:7.2f}s  {detail}")
    total = sum(r.seconds for r in results)
    if total > TIME_BUDGET_S:
        report(f"warning: self-test took {total:.0f}s, above the {TIME_BUDGET_S:.0f}s budget")
    return results
