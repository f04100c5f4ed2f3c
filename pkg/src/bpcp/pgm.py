"""Binary greyscale PGM (P5, maxval 255) I/O.

Pixels are exposed as float64 arrays in [0, 1] with shape (height, width).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class PgmError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    pos = 0
    out = []
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise PgmError("truncated header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise PgmError("truncated header")
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        out.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data):
        raise PgmError("missing raster")
    return out, pos + 1


def parse_pgm(data: bytes) -> np.ndarray:
    tokens, offset = _tokens(data, 4)
    if tokens[0] != b"P5":
        raise PgmError(f"unsupported magic {tokens[0]!r}; only binary P5 is supported")
    try:
        width, height, maxval = (int(tok) for tok in tokens[1:])
    except ValueError as exc:
        raise PgmError("non-numeric header field") from exc
    if width < 1 or height < 1:
        raise PgmError("image dimensions must be positive")
    if maxval != 255:
        raise PgmError(f"maxval must be 255, got {maxval}")
    raster = data[offset : offset + width * height]
    if len(raster) < width * height:
        raise PgmError(f"truncated payload: {len(raster)} of {width * height} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(np.float64) / 255.0


def load_pgm(path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())


def to_bytes(image) -> np.ndarray:
    """Quantize [0, 1] floats to uint8 with round-half-up and clamping."""
    img = np.asarray(image, dtype=np.float64)
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encode an already-quantized uint8 array."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise PgmError("encode_pgm expects a 2-D uint8 array")
    height, width = pixels.shape
    return b"P5\n%d %d\n255\n" % (width, height) + pixels.tobytes()


def save_pgm(image, path) -> None:
    img = np.asarray(image)
    pixels = img if img.dtype == np.uint8 else to_bytes(img)
    Path(path).write_bytes(encode_pgm(pixels))
