"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    magic        8 bytes   b"PGCSCKPT"
    version      uint32
    meta_len     uint32
    metadata     meta_len bytes, UTF-8, sorted "key=value" lines
    n_arrays     uint32
    n_arrays x:
        name_len uint16, name (UTF-8)
        ndim     uint8,  shape as ndim x uint64
        data     prod(shape) x float64 (little-endian, C order)

Floats in the metadata are written with ``repr`` so they round-trip exactly.
RNG streams are addressed by ``(seed, stream, epoch, batch)``, so ``seed`` and
``epoch`` are the complete generator state.
"""

from __future__ import annotations

import ast
import io
import math
import struct

import numpy as np

from .bps import BpsConfig
from .nnkit import AdamState, Dense, DenseNet, Tensor
from .shaping import AutoEncoder, InputScaler, RxNet, TxNet
from .trainer import TrainConfig, TrainState

MAGIC = b"PGCSCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _config_items(config: TrainConfig) -> dict:
    items = {}
    for name in TrainConfig.__dataclass_fields__:
        value = getattr(config, name)
        if name == "bps":
            for bname in BpsConfig.__dataclass_fields__:
                items[f"bps.{bname}"] = getattr(value, bname)
        else:
            items[f"config.{name}"] = value
    return items


def _encode(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "(" + ", ".join(_encode(v) for v in value) + ("," if len(value) == 1 else "") + ")"
    return repr(value)


def _decode(text: str):
    if text in ("inf", "-inf", "nan"):
        return float(text)
    return ast.literal_eval(text)


def _net_arrays(prefix: str, net: DenseNet) -> list:
    out = []
    for i, layer in enumerate(net.layers):
        out.append((f"{prefix}.{i}.weight", layer.weight.data))
        out.append((f"{prefix}.{i}.bias", layer.bias.data))
    return out


def dumps(state: TrainState) -> bytes:
    model = state.model
    meta = _config_items(state.config)
    meta.update({f"scaler.{k}": v for k, v in model.scaler.as_dict().items()})
    meta["format_version"] = VERSION
    meta["epoch"] = state.epoch
    meta["mode"] = model.mode
    meta["m"] = model.m
    meta["llr_convention"] = "L=log(P(b=0)/P(b=1)), natural log"
    meta["adam.step"] = state.adam.step
    meta["adam.lr"] = state.adam.lr
    meta["adam.beta1"] = state.adam.beta1
    meta["adam.beta2"] = state.adam.beta2
    meta["adam.eps"] = state.adam.eps
    nets = [("rx", model.rx.net)] + ([] if model.tx is None else [("tx", model.tx.net)])
    for name, net in nets:
        meta[f"{name}.activations"] = ",".join(layer.activation for layer in net.layers)

    arrays = []
    for name, net in nets:
        arrays += _net_arrays(name, net)
    for i, (m1, v2) in enumerate(zip(state.adam.m, state.adam.v)):
        arrays.append((f"adam.m.{i}", m1))
        arrays.append((f"adam.v.{i}", v2))

    text = "".join(f"{k}={_encode(meta[k])}\n" for k in sorted(meta)).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(text)))
    buf.write(text)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def _read(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def _parse(blob: bytes) -> tuple:
    buf = io.BytesIO(blob)
    if _read(buf, len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, meta_len = struct.unpack("<II", _read(buf, 8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        meta = {}
        for line in _read(buf, meta_len).decode("utf-8").splitlines():
            key, _, value = line.partition("=")
            meta[key] = _decode(value)
    except (ValueError, SyntaxError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt metadata: {exc}") from None
    (n_arrays,) = struct.unpack("<I", _read(buf, 4))
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<H", _read(buf, 2))
        name = _read(buf, name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", _read(buf, 1))
        shape = struct.unpack(f"<{ndim}Q", _read(buf, 8 * ndim))
        count = math.prod(shape)
        arrays[name] = np.frombuffer(_read(buf, 8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if buf.read(1):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return meta, arrays


def _build_net(prefix: str, meta: dict, arrays: dict) -> DenseNet:
    acts = meta[f"{prefix}.activations"].split(",")
    layers = []
    for i, act in enumerate(acts):
        w = arrays[f"{prefix}.{i}.weight"].copy()
        b = arrays[f"{prefix}.{i}.bias"].copy()
        layers.append(Dense(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True), act))
    return DenseNet(layers)


def loads(blob: bytes, expect_m: int | None = None) -> TrainState:
    meta, arrays = _parse(blob)
    try:
        bps = BpsConfig(**{k[4:]: v for k, v in meta.items() if k.startswith("bps.")})
        fields = {k[7:]: v for k, v in meta.items() if k.startswith("config.")}
        config = TrainConfig(bps=bps, **fields)
        scaler = InputScaler(**{k[7:]: v for k, v in meta.items() if k.startswith("scaler.")})
        m = meta["m"]
        if expect_m is not None and m != expect_m:
            raise CheckpointError(f"checkpoint has m={m}, expected m={expect_m}")
        if config.m != m:
            raise CheckpointError("inconsistent m in checkpoint metadata")
        rx = RxNet(m, _build_net("rx", meta, arrays))
        tx = TxNet(m, _build_net("tx", meta, arrays)) if "tx.activations" in meta else None
        model = AutoEncoder(m, scaler, rx, tx, meta["mode"])
        n_params = len(model.parameters())
        adam = AdamState(
            [arrays[f"adam.m.{i}"].copy() for i in range(n_params)],
            [arrays[f"adam.v.{i}"].copy() for i in range(n_params)],
            step=meta["adam.step"],
            lr=meta["adam.lr"],
            beta1=meta["adam.beta1"],
            beta2=meta["adam.beta2"],
            eps=meta["adam.eps"],
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing entry {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"invalid checkpoint content: {exc}") from None
    return TrainState(config, model, adam, epoch=meta["epoch"])


def save_checkpoint(state: TrainState, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(state))


def load_checkpoint(path, expect_m: int | None = None) -> TrainState:
    with open(path, "rb") as fh:
        return loads(fh.read(), expect_m)
