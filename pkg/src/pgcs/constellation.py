"""Labeled complex constellations, Gray-mapped square QAM and a text file format.

Labels are stored MSB-first: ``labels[i, 0]`` is the first bit ``b_1`` of the
pattern mapped to ``points[i]``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import TextIO, Union

import numpy as np

MAX_ORDER = 4096

PathOrFile = Union[str, os.PathLike, TextIO]


class ConstellationError(ValueError):
    """Raised for invalid or degenerate constellations."""


class ConstellationParseError(ConstellationError):
    """Raised for malformed constellation files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def int_to_bits(values, m: int) -> np.ndarray:
    """MSB-first binary expansion, shape ``values.shape + (m,)``."""
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((values[..., None] >> shifts) & 1).astype(np.int8)


def bits_to_int(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    m = bits.shape[-1]
    weights = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)
    return bits @ weights


@dataclass(frozen=True, eq=False)
class Constellation:
    """``2**m`` complex points with a bijective m-bit labeling."""

    points: np.ndarray
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        points = np.array(self.points, dtype=np.complex128).reshape(-1)
        order = points.size
        if order < 2 or order > MAX_ORDER or order & (order - 1):
            raise ConstellationError(f"order must be a power of two in [2, {MAX_ORDER}], got {order}")
        m = order.bit_length() - 1
        if self.labels is None:
            labels = int_to_bits(np.arange(order), m)
        else:
            labels = np.array(self.labels, dtype=np.int8)
            if labels.shape != (order, m):
                raise ConstellationError(f"labels must have shape ({order}, {m}), got {labels.shape}")
            if not np.isin(labels, (0, 1)).all():
                raise ConstellationError("labels must be binary")
            if np.unique(bits_to_int(labels)).size != order:
                raise ConstellationError("labels are not a permutation of all bit patterns")
        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def m(self) -> int:
        return self.order.bit_length() - 1

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def label_ints(self) -> np.ndarray:
        return bits_to_int(self.labels)

    def points_by_label(self) -> np.ndarray:
        """Points reordered so that entry ``i`` carries the label with integer value ``i``."""
        out = np.empty_like(self.points)
        out[self.label_ints()] = self.points
        return out

    def __eq__(self, other):
        if not isinstance(other, Constellation):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(self.labels, other.labels)

    def __repr__(self):
        return f"Constellation(m={self.m}, mean_power={self.mean_power:.6g})"


def normalize(c: Constellation) -> Constellation:
    """Scale by a positive real so that the mean point energy is one."""
    power = np.mean(np.abs(c.points) ** 2)
    if not power > 0:
        raise ConstellationError("cannot normalize an all-zero constellation")
    return Constellation(c.points / np.sqrt(power), c.labels)


def gray_code(n_bits: int) -> np.ndarray:
    """Reflected Gray code: entry ``i`` is the Gray codeword at grid position ``i``."""
    idx = np.arange(1 << n_bits)
    return idx ^ (idx >> 1)


def make_square_qam(m: int) -> Constellation:
    """Gray-mapped square ``2**m``-QAM with unit mean energy.

    The first ``m/2`` label bits select the in-phase level and the last ``m/2``
    the quadrature level, each with a per-axis reflected Gray code.
    """
    if not isinstance(m, (int, np.integer)) or m % 2 or not 2 <= m <= 10:
        raise ConstellationError(f"square QAM needs an even m in [2, 10], got {m!r}")
    half = m // 2
    side = 1 << half
    levels = 2 * np.arange(side) - (side - 1)
    gray = gray_code(half)
    i_idx, q_idx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    i_idx, q_idx = i_idx.ravel(), q_idx.ravel()
    points = levels[i_idx] + 1j * levels[q_idx]
    labels = np.concatenate([int_to_bits(gray[i_idx], half), int_to_bits(gray[q_idx], half)], axis=1)
    return normalize(Constellation(points, labels))


def write_constellation(c: Constellation, sink: PathOrFile) -> None:
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            write_constellation(c, fh)
        return
    sink.write(f"# m={c.m}\n")
    for bits, point in zip(c.labels, c.points):
        label = "".join(str(int(b)) for b in bits)
        sink.write(f"{label}\t{point.real:.17g}\t{point.imag:.17g}\n")


def read_constellation(source: PathOrFile) -> Constellation:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return read_constellation(fh)
    lines = source.read().splitlines()
    if not lines:
        raise ConstellationParseError("empty file", 1)
    header = lines[0].strip()
    if not header.startswith("# m="):
        raise ConstellationParseError("expected header '# m=<m>'", 1)
    try:
        m = int(header[4:])
    except ValueError:
        raise ConstellationParseError(f"bad bits-per-symbol value {header[4:]!r}", 1) from None
    if not 1 <= m <= 12:
        raise ConstellationParseError(f"m={m} out of range", 1)

    labels, points = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ConstellationParseError(f"expected 3 tab-separated fields, got {len(fields)}", lineno)
        label, re_s, im_s = fields
        if len(label) != m or set(label) - {"0", "1"}:
            raise ConstellationParseError(f"bad label {label!r} for m={m}", lineno)
        try:
            point = complex(float(re_s), float(im_s))
        except ValueError:
            raise ConstellationParseError(f"bad coordinate in {line!r}", lineno) from None
        labels.append([int(ch) for ch in label])
        points.append(point)

    if len(points) != 1 << m:
        raise ConstellationError(f"expected {1 << m} points for m={m}, found {len(points)}")
    return Constellation(np.array(points), np.array(labels))
