import math

import numpy as np
import pytest

from conftest import eval_spec
from pgcs.bps import BpsConfig
from pgcs.channel import ChannelParams, snr_db_to_sigma_n
from pgcs.constellation import make_square_qam, read_constellation
from pgcs.evalsuite import (
    DEFAULT_LINEWIDTHS_HZ,
    DEFAULT_SNR_DB,
    SweepSpec,
    constellation_filename,
    estimate_bmi,
    evaluate,
    export_constellation_sweep,
    format_table,
    point_seed,
    read_table,
    run_point,
    run_sweep,
    write_table,
)
from pgcs.nnkit import DegenerateBatchError
from pgcs.oracles import symbol_mi_monte_carlo
from pgcs.shaping import AutoEncoder, InputScaler, exact_gaussian_llrs
from pgcs.trainer import TrainConfig, train

SMALL = SweepSpec(snr_db=(14, 20), linewidth_hz=(50e3, 600e3), symbols_per_point=4000, bps=BpsConfig(window_size=32), frame_length=1000)


@pytest.fixture(scope="module")
def untrained():
    return AutoEncoder.create(2, InputScaler(0.05, 0.2, 0.001, 0.01), np.random.default_rng(0))


def test_default_grid():
    assert DEFAULT_SNR_DB == (14, 15, 16, 17, 18, 20, 25)
    assert len(DEFAULT_LINEWIDTHS_HZ) == 10
    assert DEFAULT_LINEWIDTHS_HZ[0] == 50e3 and DEFAULT_LINEWIDTHS_HZ[-1] == 600e3


def test_bmi_perfect_and_zero_llrs():
    bits = np.random.default_rng(0).integers(0, 2, (1000, 4))
    perfect = np.where(bits == 0, np.inf, -np.inf)
    assert estimate_bmi(perfect, bits) == pytest.approx(4.0, abs=1e-6)
    assert estimate_bmi(np.zeros_like(bits, dtype=float), bits) == 0.0


def test_bmi_clamps_and_masks():
    bits = np.array([[0], [1]])
    wrong = np.array([[-10.0], [10.0]])
    assert estimate_bmi(wrong, bits) == 0.0
    assert estimate_bmi(wrong, bits, clamp=False) < -10
    assert estimate_bmi(np.array([[40.0], [-40.0]]), bits, mask=[True, False]) == pytest.approx(1.0)
    with pytest.raises(DegenerateBatchError):
        estimate_bmi(wrong, bits, mask=[False, False])
    with pytest.raises(ValueError):
        estimate_bmi(wrong, np.zeros((2, 2)))


def test_bmi_qpsk_matches_mc_mi():
    rng = np.random.default_rng(1)
    c, n, sigma = make_square_qam(2), 300_000, snr_db_to_sigma_n(8)
    labels = rng.integers(0, 4, n)
    y = c.points_by_label()[labels] + sigma / math.sqrt(2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    bits = (labels[:, None] >> np.array([1, 0])) & 1
    bmi = estimate_bmi(exact_gaussian_llrs(y, c, sigma), bits)
    assert bmi == pytest.approx(symbol_mi_monte_carlo(c.points, sigma, n, rng), abs=0.01)


def test_point_seed_depends_only_on_point():
    assert point_seed(3, 18.0, 1e5) == point_seed(3, 18.0, 1e5)
    assert len({point_seed(3, s, lw) for s in (14, 18) for lw in (5e4, 1e5)}) == 4
    assert point_seed(3, 18.0, 1e5) != point_seed(4, 18.0, 1e5)


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(snr_db=())
    with pytest.raises(ValueError):
        SweepSpec(symbols_per_point=100)
    with pytest.raises(ValueError):
        SweepSpec(frame_length=100)


def test_sweep_rows_deterministic_any_jobs(untrained):
    a = run_sweep(untrained, SMALL)
    b = run_sweep(untrained, SMALL, jobs=3)
    assert [(r.snr_db, r.linewidth_hz) for r in a.rows] == [(14, 50e3), (14, 600e3), (20, 50e3), (20, 600e3)]
    assert a.rows == b.rows
    assert all(0 <= r.bmi_bits <= 2 for r in a.rows)
    assert a.metadata["edge_symbols_excluded"] == 32 and a.metadata["frame_length"] == 1000
    assert a.rows[0].n_symbols == 4000 - 4 * 32  # four frames, 32 edge symbols each
    assert a.bmi(20, 600e3) == a.rows[3].bmi_bits


def test_evaluate_point_independent_of_grid(untrained):
    full = run_sweep(untrained, SMALL)
    single = evaluate(untrained, 20.0, 50e3, SMALL)
    assert single == full.rows[2]


def test_table_round_trip(untrained, tmp_path):
    result = run_sweep(untrained, SMALL)
    path = tmp_path / "t.txt"
    write_table(result, path)
    text = path.read_text()
    assert text.splitlines()[0] == "snr linewidth mean n seed"
    assert text.splitlines()[1].startswith("14.00 50000.00 ")
    rows = read_table(path)
    assert [(r.snr_db, r.linewidth_hz, r.n_symbols, r.seed) for r in rows] == [
        (r.snr_db, r.linewidth_hz, r.n_symbols, r.seed) for r in result.rows
    ]
    for a, b in zip(rows, result.rows):
        assert a.bmi_bits == pytest.approx(b.bmi_bits, abs=5e-7)
    assert format_table(result) == text
    bad = tmp_path / "bad.txt"
    bad.write_text("a b c\n")
    with pytest.raises(ValueError):
        read_table(bad)


def test_export_files(untrained, tmp_path):
    paths = export_constellation_sweep(untrained, [18.0], DEFAULT_LINEWIDTHS_HZ, tmp_path / "a")
    assert len(paths) == 10
    assert paths[0].name == constellation_filename(50e3, 18.0) == "constellation_50000.00_18.txt"
    for p in paths:
        c = read_constellation(p)
        assert c.order == 4 and abs(c.mean_power - 1) < 1e-9
    again = export_constellation_sweep(untrained, [18.0], DEFAULT_LINEWIDTHS_HZ, tmp_path / "b")
    assert [p.read_bytes() for p in paths] == [p.read_bytes() for p in again]
    with pytest.raises(ValueError):
        export_constellation_sweep(untrained, [18.0], [], tmp_path)


def test_export_robust_identical(tmp_path):
    robust = AutoEncoder.create(3, InputScaler(0.05, 0.2, 0.001, 0.01), np.random.default_rng(1), "robust")
    paths = export_constellation_sweep(robust, (14, 25), (5e4, 6e5), tmp_path)
    assert len({p.read_bytes() for p in paths}) == 1


def test_evaluate_rejects_bad_point(untrained):
    with pytest.raises(ValueError):
        evaluate(untrained, 18.0, -5.0, SMALL)


@pytest.mark.slow
def test_qam_baseline_high_snr_no_phase_noise():
    config = TrainConfig(
        m=6, epochs=40, batches_per_epoch=10, batch_start=1000, batch_end=2000, snr_db_range=(25, 25),
        linewidth_range_hz=(0, 0), seed=2, mode="qam_demapper_only", learning_rate=1e-2,
    )
    state, _ = train(config)
    spec = SweepSpec(symbols_per_point=1 << 16, bps=config.bps, frame_length=2000)
    params = ChannelParams(snr_db_to_sigma_n(25), 0.0)
    bmi, _, _ = run_point(state.model, params, params, spec, seed=11)
    assert bmi >= 5.9


POINTS = [(14.0, 50e3), (14.0, 600e3), (18.0, 300e3), (25.0, 50e3), (25.0, 600e3)]


@pytest.mark.slow
@pytest.mark.parametrize("snr, lw", POINTS)
def test_misestimation_never_helps(desk_pgcs, snr, lw):
    spec = eval_spec(desk_pgcs.config, symbols=1 << 16)
    perfect = evaluate(desk_pgcs.model, snr, lw, spec).bmi_bits
    for offset in (-2.0, 2.0):
        assert evaluate(desk_pgcs.model, snr, lw, spec, offset_db=offset).bmi_bits <= perfect + 0.02


@pytest.mark.slow
def test_low_snr_underestimate_vs_overestimate(desk_pgcs):
    spec = eval_spec(desk_pgcs.config, symbols=1 << 16)
    under = evaluate(desk_pgcs.model, 14.0, 300e3, spec, offset_db=-2.0).bmi_bits
    over = evaluate(desk_pgcs.model, 14.0, 300e3, spec, offset_db=2.0).bmi_bits
    assert under >= over - 0.02


@pytest.mark.slow
def test_sweep_monotone_in_snr_and_linewidth(desk_pgcs):
    spec = eval_spec(desk_pgcs.config, symbols=1 << 15)
    spec = SweepSpec(
        snr_db=(14, 16, 18, 25), linewidth_hz=(50e3, 300e3, 600e3), symbols_per_point=1 << 15,
        seed=spec.seed, bps=spec.bps, frame_length=spec.frame_length,
    )
    result = run_sweep(desk_pgcs.model, spec)
    grid = np.array([r.bmi_bits for r in result.rows]).reshape(4, 3)
    assert np.all(np.diff(grid, axis=0) >= -0.03)
    assert np.all(np.diff(grid, axis=1) <= 0.03)
