import numpy as np
import pytest

from dqforensics.jpeg_codec import CoeffImage, quality_to_table


def random_coeff_image(rng, max_blocks=6, spread=40, width=None, height=None):
    """CoeffImage with laplacian-ish coefficients, sizes not tied to multiples of 8."""
    width = width or int(rng.integers(1, 8 * max_blocks + 1))
    height = height or int(rng.integers(1, 8 * max_blocks + 1))
    shape = (-(-height // 8), -(-width // 8), 8, 8)
    coeffs = np.rint(rng.laplace(0, spread / 4, size=shape)).astype(np.int64)
    coeffs[..., 0, 0] = rng.integers(-1024, 1024, size=shape[:2])
    # a few extreme values to exercise the long codes
    flat = coeffs.reshape(-1)
    hits = rng.integers(0, flat.size, size=3)
    flat[hits] = rng.choice([-1023, 1023, -512, 511], size=3)
    coeffs = np.clip(coeffs, -1023, 1023)
    qf = int(rng.integers(1, 101))
    return CoeffImage(width, height, coeffs, quality_to_table(qf))


def naive_features(c, region=None, radius=15):
    """Loop-by-loop histogram counter used as an oracle."""
    zz = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2), (2, 1), (3, 0)]
    by, bx = c.coeffs.shape[:2]
    if region is None:
        region = (0, 0, 8 * bx, 8 * by)
    x, y, w, h = region
    nbins = 2 * radius + 1
    out = [0] * (9 * nbins)
    for r in range(y // 8, (y + h) // 8):
        for col in range(x // 8, (x + w) // 8):
            for i in range(9):
                row_pos, col_pos = zz[i + 1]
                v = int(c.coeffs[r, col, row_pos, col_pos])
                if -radius <= v <= radius:
                    out[i * nbins + v + radius] += 1
    return np.array(out, dtype=np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
