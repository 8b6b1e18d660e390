"""TOML experiment configuration with a strict schema.

Top-level keys mirror :class:`pgcs.trainer.TrainConfig`; a ``[bps]`` table sets
the BPS grid and window.  Unknown keys and wrong types are errors naming the
offending field.
"""

from __future__ import annotations

import hashlib
import sys
from importlib import resources
from pathlib import Path

from .bps import BpsConfig
from .trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


_INT, _FLOAT, _STR, _PAIR = "int", "float", "str", "pair"

TOP_SCHEMA = {
    "m": _INT,
    "epochs": _INT,
    "batches_per_epoch": _INT,
    "batch_start": _INT,
    "batch_end": _INT,
    "snr_db_range": _PAIR,
    "linewidth_range_hz": _PAIR,
    "symbol_rate": _FLOAT,
    "temp_start": _FLOAT,
    "temp_end": _FLOAT,
    "learning_rate": _FLOAT,
    "seed": _INT,
    "mode": _STR,
    "sampling": _STR,
}

BPS_SCHEMA = {
    "num_test_angles": _INT,
    "window_size": _INT,
    "angle_min": _FLOAT,
    "angle_max": _FLOAT,
    "unwrap_period": _FLOAT,
}


def _coerce(field: str, kind: str, value):
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(field, f"expected an integer, got {value!r}")
        return value
    if kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(field, f"expected a number, got {value!r}")
        return float(value)
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(field, f"expected a string, got {value!r}")
        return value
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(field, f"expected a two-element list, got {value!r}")
    return tuple(_coerce(f"{field}[{i}]", _FLOAT, v) for i, v in enumerate(value))


def config_from_dict(data: dict, overrides: dict | None = None) -> TrainConfig:
    data = dict(data)
    bps_table = data.pop("bps", {})
    if not isinstance(bps_table, dict):
        raise ConfigError("bps", "must be a table")
    top, bps = {}, {}
    for key, value in data.items():
        if key not in TOP_SCHEMA:
            raise ConfigError(key, "unknown key")
        top[key] = _coerce(key, TOP_SCHEMA[key], value)
    for key, value in bps_table.items():
        if key not in BPS_SCHEMA:
            raise ConfigError(f"bps.{key}", "unknown key")
        bps[key] = _coerce(f"bps.{key}", BPS_SCHEMA[key], value)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in TOP_SCHEMA:
            top[key] = value
        elif key.startswith("bps.") and key[4:] in BPS_SCHEMA:
            bps[key[4:]] = value
        else:
            raise ConfigError(key, "unknown override")
    try:
        bps_config = BpsConfig(**bps)
    except ValueError as exc:
        raise ConfigError("bps", str(exc)) from None
    try:
        return TrainConfig(bps=bps_config, **top)
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from None


def load_config(path, overrides: dict | None = None) -> tuple:
    """Parse a config file. Returns ``(TrainConfig, sha256 hex digest of the file bytes)``."""
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(str(path), f"not valid TOML: {exc}") from None
    return config_from_dict(data, overrides), hashlib.sha256(raw).hexdigest()


def bundled_config(name: str) -> Path:
    """Path of a shipped config, ``"paper"`` or ``"desk"``."""
    return Path(str(resources.files("pgcs") / "configs" / f"{name}.toml"))
