"""DCT coefficient histogram features.

For zigzag frequencies 2..10 (the first nine AC terms) and every integer bin
in [-radius, radius], count how many 8x8 blocks of a region hold that value.
Out-of-range coefficients are dropped, not clamped into the edge bins.
The vector is frequency-major: all bins of frequency 2, then frequency 3, ...
"""
from __future__ import annotations

import numpy as np

from .jpeg_codec import ZIGZAG, CoeffImage

N_FREQ = 9
RADIUS = 15
FEATURE_DIM = N_FREQ * (2 * RADIUS + 1)  # 279

# Natural indices of zigzag positions 2..10.
AC_POSITIONS = ZIGZAG[1:1 + N_FREQ]


def feature_dim(radius: int = RADIUS) -> int:
    return N_FREQ * (2 * radius + 1)


def _region_blocks(c: CoeffImage, region) -> tuple[int, int, int, int]:
    x, y, w, h = (int(v) for v in region)
    if any(v % 8 for v in (x, y, w, h)):
        raise ValueError(f"region {region} is not aligned to the 8x8 grid")
    by, bx = c.blocks_shape
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > 8 * bx or y + h > 8 * by:
        raise ValueError(f"region {region} outside the {8 * bx}x{8 * by} block grid")
    return y // 8, x // 8, h // 8, w // 8


def _ac_values(c: CoeffImage) -> np.ndarray:
    """(by, bx, 9) selected AC coefficients."""
    by, bx = c.blocks_shape
    return c.coeffs.reshape(by, bx, 64)[:, :, AC_POSITIONS]


def extract_features(c: CoeffImage, region=None, radius: int = RADIUS) -> np.ndarray:
    """Histogram feature of a block-aligned (x, y, width, height) pixel region.

    ``region`` defaults to the whole block grid. Returns raw counts as float32.
    """
    if region is None:
        by, bx = c.blocks_shape
        region = (0, 0, 8 * bx, 8 * by)
    r0, c0, nr, nc = _region_blocks(c, region)
    vals = _ac_values(c)[r0:r0 + nr, c0:c0 + nc].reshape(-1, N_FREQ)
    nbins = 2 * radius + 1
    inside = np.abs(vals) <= radius
    flat = (np.arange(N_FREQ) * nbins)[None, :] + vals + radius
    hist = np.bincount(flat[inside], minlength=N_FREQ * nbins)
    return hist.astype(np.float32)


def features_normalized(v, n_blocks: int) -> np.ndarray:
    """Divide counts by the number of blocks in the region."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    return (np.asarray(v, dtype=np.float32) / np.float32(n_blocks)).astype(np.float32)


class HistogramIntegral:
    """Summed-area table of per-block one-hot bins.

    Any block-aligned rectangle's feature vector is four lookups, which is
    what makes dense sliding windows affordable.
    """

    def __init__(self, c: CoeffImage, radius: int = RADIUS):
        self.coeff_image = c
        self.radius = radius
        nbins = 2 * radius + 1
        vals = _ac_values(c)
        by, bx = c.blocks_shape
        onehot = np.zeros((by, bx, N_FREQ, nbins), dtype=np.int32)
        inside = np.abs(vals) <= radius
        rr, cc, ff = np.nonzero(inside)
        onehot[rr, cc, ff, vals[inside] + radius] = 1
        table = np.zeros((by + 1, bx + 1, N_FREQ * nbins), dtype=np.int32)
        table[1:, 1:] = onehot.reshape(by, bx, -1).cumsum(0).cumsum(1)
        self.table = table

    def region(self, region) -> np.ndarray:
        r0, c0, nr, nc = _region_blocks(self.coeff_image, region)
        return self._lookup(np.array([r0]), np.array([c0]), nr, nc)[0]

    def regions(self, origins, size) -> np.ndarray:
        """Features for many (x, y) origins sharing one (width, height)."""
        origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
        w, h = size
        for x, y in origins[:1]:
            _region_blocks(self.coeff_image, (x, y, w, h))
        if len(origins) and (origins % 8).any():
            raise ValueError("window origins must be multiples of 8")
        by, bx = self.coeff_image.blocks_shape
        cols, rows = origins[:, 0] // 8, origins[:, 1] // 8
        nr, nc = h // 8, w // 8
        if len(origins) and (rows.min() < 0 or cols.min() < 0
                             or (rows + nr).max() > by or (cols + nc).max() > bx):
            raise ValueError("window outside the block grid")
        return self._lookup(rows, cols, nr, nc)

    def _lookup(self, rows, cols, nr, nc):
        t = self.table
        out = t[rows + nr, cols + nc] - t[rows, cols + nc] - t[rows + nr, cols] + t[rows, cols]
        return out.astype(np.float32)
