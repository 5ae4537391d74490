"""Procedural stand-in for a lossless photo corpus.

Each image mixes a smooth illumination gradient, band-limited noise at a few
octaves, soft-edged random shapes and fine grain. A slowly varying envelope
scales the texture so some areas are busy and others nearly flat, which gives
the sharply peaked AC histograms seen in real photos.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .formats import read_pgm, write_pgm


def synthesize_image(rng: np.random.Generator, width: int = 512, height: int = 384) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = rng.uniform(100, 160) + rng.uniform(-0.08, 0.08) * xx + rng.uniform(-0.08, 0.08) * yy

    env = gaussian_filter(rng.standard_normal((height, width)), 40, mode="wrap")
    env = np.exp(1.5 * (env - env.mean()) / (env.std() + 1e-12))
    env = np.minimum(env / env.mean(), 2.5)

    for sigma, amp in ((24, 20), (8, 18), (3, 10)):
        field = gaussian_filter(rng.standard_normal((height, width)), sigma, mode="wrap")
        img += amp * rng.uniform(0.5, 1.5) * env * field / (field.std() + 1e-12)

    for _ in range(rng.integers(4, 10)):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        rx, ry = rng.uniform(10, width / 4), rng.uniform(10, height / 4)
        inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        if rng.random() < 0.5:
            inside = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
        soft = gaussian_filter(inside.astype(np.float64), rng.uniform(0.5, 2.5))
        img += rng.uniform(-45, 45) * soft

    grain = gaussian_filter(rng.standard_normal((height, width)), rng.uniform(0.5, 0.9))
    img += rng.uniform(4, 9) * np.sqrt(env) * grain / (grain.std() + 1e-12)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synthesize_corpus(n: int, seed: int = 0, width: int = 512, height: int = 384) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [synthesize_image(rng, width, height) for _ in range(n)]


def load_corpus(corpus_dir) -> tuple[list[np.ndarray], list[str]]:
    """All ``*.pgm`` files in a directory, sorted by name."""
    paths = sorted(Path(corpus_dir).glob("*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no .pgm files in {corpus_dir}")
    return [read_pgm(p) for p in paths], [p.stem for p in paths]


def write_corpus(images, out_dir, prefix: str = "img") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = out / f"{prefix}{i:04d}.pgm"
        write_pgm(p, img)
        paths.append(p)
    return paths
