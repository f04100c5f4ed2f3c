"""Matrix file formats.

Binary layout: little-endian ``u64 rows, u64 cols`` followed by
``rows * cols`` IEEE-754 doubles in row-major order. CSV files hold one
matrix row per line, rendered with 17 significant digits so that a
write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .linalg_core import as_matrix

_HEADER = struct.Struct("<QQ")


def write_binary(a, path) -> None:
    a = as_matrix(a)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*a.shape))
        fh.write(a.astype("<f8", copy=False).tobytes(order="C"))


def read_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    rows, cols = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    return as_matrix(data.astype(np.float64))


def write_csv(a, path) -> None:
    a = as_matrix(a)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in a:
            writer.writerow(f"{x:.17g}" for x in row)


def read_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError(f"{path}: ragged or empty CSV matrix")
    return as_matrix(rows)


def load_matrix(path) -> np.ndarray:
    """Read ``path`` as CSV if it ends in ``.csv``, else as the binary format."""
    return read_csv(path) if str(path).lower().endswith(".csv") else read_binary(path)


def save_matrix(a, path) -> None:
    if str(path).lower().endswith(".csv"):
        write_csv(a, path)
    else:
        write_binary(a, path)
