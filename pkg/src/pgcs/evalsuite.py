"""Frozen-model evaluation with the hard BPS: BMI per channel point, sweeps, exports."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rng as rngmod
from .bps import HARD, BpsConfig, bps_hard, edge_mask, resolve_ambiguity_genie
from .channel import ChannelParams, linewidth_to_sigma_phi, sample_impairments, snr_db_to_sigma_n
from .constellation import write_constellation
from .nnkit.losses import DegenerateBatchError, bce_cells_bits
from .shaping import AutoEncoder
from .trainer import qam_bps_config

DEFAULT_SNR_DB = (14.0, 15.0, 16.0, 17.0, 18.0, 20.0, 25.0)
DEFAULT_LINEWIDTHS_HZ = tuple(float(v) for v in np.linspace(50e3, 600e3, 10))


@dataclass(frozen=True)
class SweepSpec:
    snr_db: tuple = DEFAULT_SNR_DB
    linewidth_hz: tuple = DEFAULT_LINEWIDTHS_HZ
    symbols_per_point: int = 1 << 17
    seed: int = 0
    misestimation_offset_db: float = 0.0
    symbol_rate: float = 32e9
    bps: BpsConfig = field(default_factory=BpsConfig)
    # Symbols are sent in independent frames; each frame restarts the phase
    # process and loses its window edges.
    frame_length: int = 10000

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(v) for v in self.snr_db))
        object.__setattr__(self, "linewidth_hz", tuple(float(v) for v in self.linewidth_hz))
        if not self.snr_db or not self.linewidth_hz:
            raise ValueError("snr_db and linewidth_hz must be nonempty")
        if self.symbols_per_point < 10 * self.bps.window_size:
            raise ValueError("symbols_per_point must be >= 10 * window_size")
        if self.frame_length < 2 * self.bps.window_size:
            raise ValueError("frame_length must be >= 2 * window_size")


@dataclass(frozen=True)
class PointResult:
    snr_db: float
    linewidth_hz: float
    bmi_bits: float
    bmi_raw: float
    n_symbols: int
    seed: int


@dataclass
class SweepResult:
    rows: list
    metadata: dict

    def bmi(self, snr_db: float, linewidth_hz: float) -> float:
        for row in self.rows:
            if math.isclose(row.snr_db, snr_db) and math.isclose(row.linewidth_hz, linewidth_hz):
                return row.bmi_bits
        raise KeyError((snr_db, linewidth_hz))


def estimate_bmi(llrs, bits, mask=None, clamp: bool = True) -> float:
    """``m - sum_i mean_k BCE_bits(L[k,i], b[k,i])`` over the symbols selected by ``mask``."""
    llrs = np.asarray(llrs, dtype=np.float64)
    bits = np.asarray(bits)
    if llrs.shape != bits.shape:
        raise ValueError(f"llrs {llrs.shape} and bits {bits.shape} differ in shape")
    rows = np.ones(len(bits), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not rows.any():
        raise DegenerateBatchError("mask selects no symbols")
    m = bits.shape[1]
    bmi = m - float(bce_cells_bits(llrs[rows], bits[rows]).mean(axis=0).sum())
    return max(bmi, 0.0) if clamp else bmi


def point_seed(master: int, snr_db: float, linewidth_hz: float) -> int:
    """Per-point seed that depends on the point itself, not on the grid it sits in."""
    return rngmod.derive_seed(master, int(round(snr_db * 1000)), int(round(linewidth_hz)))


def _frame_sizes(total: int, frame_length: int) -> list:
    n_frames = max(1, int(round(total / frame_length)))
    return [len(a) for a in np.array_split(np.arange(total), n_frames)]


def run_point(
    model: AutoEncoder,
    true_params: ChannelParams,
    assumed_params: ChannelParams,
    spec: SweepSpec,
    seed: int,
) -> tuple:
    """BMI of one channel point using the hard BPS.

    The Tx and Rx are conditioned on ``assumed_params``, the channel runs at
    ``true_params``.  Returns ``(bmi_clamped, bmi_raw, n_counted_symbols)``.
    """
    const = model.constellation(assumed_params)
    if model.is_qam:
        config = qam_bps_config(spec.bps)
    else:
        config = spec.bps.with_(mode=HARD)
    by_label = const.points_by_label()

    all_llrs, all_bits, all_mask = [], [], []
    for f, n in enumerate(_frame_sizes(spec.symbols_per_point, spec.frame_length)):
        bits = rngmod.stream(seed, rngmod.BITS, f).integers(0, 2, size=(n, model.m))
        idx = bits @ (1 << np.arange(model.m - 1, -1, -1))
        x = by_label[idx]
        imp = sample_impairments(
            n, true_params, rngmod.stream(seed, rngmod.NOISE, f), rngmod.stream(seed, rngmod.PHASE, f)
        )
        z = (x + imp.noise) * np.exp(1j * imp.phi)
        x_hat, _ = bps_hard(z, const, config)
        mask = ~edge_mask(n, config.window_size)
        if model.is_qam:
            x_hat = resolve_ambiguity_genie(x_hat, x, mask=mask)
        all_llrs.append(model.llrs(x_hat, assumed_params))
        all_bits.append(bits)
        all_mask.append(mask)
    llrs, bits, mask = np.concatenate(all_llrs), np.concatenate(all_bits), np.concatenate(all_mask)
    raw = estimate_bmi(llrs, bits, mask, clamp=False)
    return max(raw, 0.0), raw, int(mask.sum())


def evaluate(
    model: AutoEncoder, snr_db: float, linewidth_hz: float, spec: SweepSpec, offset_db: Optional[float] = None
) -> PointResult:
    offset = spec.misestimation_offset_db if offset_db is None else offset_db
    true = ChannelParams(snr_db_to_sigma_n(snr_db), linewidth_to_sigma_phi(linewidth_hz, spec.symbol_rate))
    assumed = ChannelParams(snr_db_to_sigma_n(snr_db + offset), true.sigma_phi)
    seed = point_seed(spec.seed, snr_db, linewidth_hz)
    try:
        bmi, raw, n = run_point(model, true, assumed, spec, seed)
    except Exception as exc:
        raise RuntimeError(f"evaluation failed at snr={snr_db} dB, linewidth={linewidth_hz} Hz: {exc}") from exc
    return PointResult(snr_db, linewidth_hz, bmi, raw, n, seed)


def spec_digest(model: AutoEncoder, spec: SweepSpec, extra: Optional[dict] = None) -> str:
    h = hashlib.sha256()
    h.update(repr(sorted(asdict(spec).items())).encode())
    h.update(repr((model.m, model.mode, sorted((extra or {}).items()))).encode())
    for p in model.parameters():
        h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def run_sweep(model: AutoEncoder, spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Cartesian SNR x linewidth grid; row order is SNR-major regardless of ``jobs``."""
    points = [(snr, lw) for snr in spec.snr_db for lw in spec.linewidth_hz]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda p: evaluate(model, p[0], p[1], spec), points))
    else:
        rows = [evaluate(model, snr, lw, spec) for snr, lw in points]
    bps_used = qam_bps_config(spec.bps) if model.is_qam else spec.bps
    metadata = {
        "config_hash": spec_digest(model, spec),
        "mode": model.mode,
        "m": model.m,
        "offset_db": spec.misestimation_offset_db,
        "angle_min": bps_used.angle_min,
        "angle_max": bps_used.angle_max,
        "num_test_angles": bps_used.num_test_angles,
        "window_size": bps_used.window_size,
        "frame_length": spec.frame_length,
        "edge_symbols_excluded": 2 * (bps_used.window_size // 2),
        "bmi_raw": [r.bmi_raw for r in rows],
    }
    return SweepResult(rows, metadata)


def format_table(result: SweepResult) -> str:
    lines = ["snr linewidth mean n seed"]
    for r in result.rows:
        lines.append(f"{r.snr_db:.2f} {r.linewidth_hz:.2f} {r.bmi_bits:.6f} {r.n_symbols} {r.seed}")
    return "\n".join(lines) + "\n"


def write_table(result: SweepResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_table(result))


def read_table(path) -> list:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header != ["snr", "linewidth", "mean", "n", "seed"]:
            raise ValueError(f"unexpected header {header}")
        rows = []
        for line in fh:
            if line.strip():
                snr, lw, mean, n, seed = line.split()
                rows.append(PointResult(float(snr), float(lw), float(mean), float(mean), int(n), int(seed)))
    return rows


def constellation_filename(linewidth_hz: float, snr_db: float) -> str:
    return f"constellation_{linewidth_hz:.2f}_{snr_db:g}.txt"


def export_constellation_sweep(
    model: AutoEncoder,
    snr_db: Sequence[float],
    linewidth_hz: Sequence[float],
    outdir,
    symbol_rate: float = 32e9,
) -> list:
    """Write the Tx constellation for every grid point; returns the written paths."""
    snr_db, linewidth_hz = list(snr_db), list(linewidth_hz)
    if not snr_db or not linewidth_hz:
        raise ValueError("snr and linewidth lists must be nonempty")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for snr in snr_db:
        for lw in linewidth_hz:
            params = ChannelParams(snr_db_to_sigma_n(snr), linewidth_to_sigma_phi(lw, symbol_rate))
            path = outdir / constellation_filename(lw, snr)
            write_constellation(model.constellation(params), path)
            paths.append(path)
    return paths
