"""Pixel-domain JPEG simulation: DCT, single compression, and the splicing model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jpeg_codec import CoeffImage, encode_jpeg, quality_to_table

_k = np.arange(8)
# Orthonormal DCT-II basis: DCT_MATRIX @ x transforms a length-8 column.
DCT_MATRIX = np.sqrt(2 / 8) * np.cos((2 * _k[None, :] + 1) * _k[:, None] * np.pi / 16)
DCT_MATRIX[0] /= np.sqrt(2)


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def fdct8x8(block) -> np.ndarray:
    """Level-shifted orthonormal 2-D DCT. Works on (..., 8, 8) stacks."""
    b = np.asarray(block, dtype=np.float64) - 128.0
    return DCT_MATRIX @ b @ DCT_MATRIX.T


def idct8x8(coeffs) -> np.ndarray:
    """Inverse of :func:`fdct8x8`, rounded and clamped to uint8."""
    x = DCT_MATRIX.T @ np.asarray(coeffs, dtype=np.float64) @ DCT_MATRIX + 128.0
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


def to_blocks(img: np.ndarray) -> np.ndarray:
    """(H, W) -> (H/8, W/8, 8, 8); dimensions must be multiples of 8."""
    h, w = img.shape
    return img.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    by, bx = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(by * 8, bx * 8)


def check_raw(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("raw image must be a 2-D luminance array")
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError("raw image must be at least 8x8")
    if img.dtype != np.uint8:
        if img.min() < 0 or img.max() > 255:
            raise ValueError("raw samples must lie in [0, 255]")
        img = img.astype(np.uint8)
    return img


def quantize(values, step):
    """round(values / step), ties away from zero."""
    return round_half_away(np.asarray(values, dtype=np.float64) / step).astype(np.int32)


def compress_once(img, qf: int) -> tuple[CoeffImage, np.ndarray]:
    """JPEG-compress a luminance image at ``qf``.

    Returns the quantized coefficients and the decompressed pixels.
    """
    img = check_raw(img)
    h, w = img.shape
    if h % 8 or w % 8:
        raise ValueError("image dimensions must be multiples of 8")
    table = quality_to_table(qf)
    steps = table.steps.astype(np.float64)
    coeffs = quantize(fdct8x8(to_blocks(img)), steps)
    decoded = from_blocks(idct8x8(coeffs * steps))
    return CoeffImage(w, h, coeffs, table), decoded


def decompress(c: CoeffImage) -> np.ndarray:
    """Dequantize and inverse-transform a coefficient image (cropped to size)."""
    pix = from_blocks(idct8x8(c.coeffs * c.quant.steps.astype(np.float64)))
    return pix[:c.height, :c.width]


def double_quantize_scalar(x, q1: int, q2: int):
    """Quantize with ``q1``, dequantize, then quantize with ``q2``."""
    if q1 < 1 or q2 < 1:
        raise ValueError("quantization steps must be >= 1")
    first = round_half_away(np.asarray(x, dtype=np.float64) / q1) * q1
    out = round_half_away(first / q2).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TamperSpec:
    """One splice: ``region`` = (x, y, width, height) is left singly compressed."""

    qf1: int
    qf2: int
    region: tuple[int, int, int, int]
    grid_offset: tuple[int, int] = (0, 0)

    def validate(self, width: int, height: int):
        x, y, w, h = self.region
        dx, dy = self.grid_offset
        if not (0 <= dx <= 7 and 0 <= dy <= 7):
            raise ValueError("grid offset must lie in [0, 7]^2")
        if w < 0 or h < 0 or x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValueError(f"region {self.region} outside a {width}x{height} image")
        if w and h and (x + w + dx > width or y + h + dy > height):
            raise ValueError("shifted source region leaves the image")
        if self.grid_offset == (0, 0) and any(v % 8 for v in self.region):
            raise ValueError("region edges must be multiples of 8 when grid_offset is (0, 0)")
        for qf in (self.qf1, self.qf2):
            if not 1 <= qf <= 100:
                raise ValueError(f"quality factor must be in 1..100, got {qf}")


def tamper(img, spec: TamperSpec) -> tuple[CoeffImage, np.ndarray]:
    """Splice original pixels into a decompressed qf1 copy and recompress at qf2.

    Returns the final coefficients and the 0/1 mask of the pasted region.
    """
    img = check_raw(img)
    height, width = img.shape
    spec.validate(width, height)
    _, spliced = compress_once(img, spec.qf1)
    spliced = spliced.copy()
    x, y, w, h = spec.region
    dx, dy = spec.grid_offset
    mask = np.zeros((height, width), dtype=np.uint8)
    if w and h:
        spliced[y:y + h, x:x + w] = img[y + dy:y + h + dy, x + dx:x + w + dx]
        mask[y:y + h, x:x + w] = 1
    coeffs, _ = compress_once(spliced, spec.qf2)
    return coeffs, mask


def tamper_and_recompress(img, spec: TamperSpec) -> tuple[bytes, np.ndarray]:
    coeffs, mask = tamper(img, spec)
    return encode_jpeg(coeffs), mask
