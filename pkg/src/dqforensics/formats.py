"""On-disk formats: binary PGM images and DJFV float32 arrays."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

DJFV_MAGIC = b"DJFV"
DJFV_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    pass


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary (P5) PGM as a (height, width) uint8 array."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM (P5)")
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width).copy()


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def write_djfv(path, rows: np.ndarray) -> None:
    """Write a (count, dim) array as little-endian float32 with a DJFV header."""
    rows = np.asarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise ValueError("DJFV payload must be 2-D")
    count, dim = rows.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DJFV_MAGIC, DJFV_VERSION, count, dim))
        fh.write(rows.tobytes())


def read_djfv(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated DJFV header")
    magic, version, count, dim = _HEADER.unpack_from(data)
    if magic != DJFV_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != DJFV_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if len(data) != _HEADER.size + 4 * count * dim:
        raise FormatError(f"{path}: payload size does not match header ({count}x{dim})")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, dim).copy()
