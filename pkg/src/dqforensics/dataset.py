"""Tampered-image datasets: left half singly compressed, right half doubly.

Layout written under ``out_dir``::

    images/<name>_<qf1>_<qf2>.jpg     tampered JPEG
    masks/<name>_<qf1>_<qf2>.pgm      0/255 mask of the singly compressed area
    images.csv                        one row per tampered image
    manifest_<scale>.csv              one row per block sample
    features_<scale>.djfv             feature rows, same order as the manifest

``<scale>`` is 64, 128, 256 or ``special``.
"""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compression_sim import TamperSpec, check_raw, tamper
from .features import FEATURE_DIM, HistogramIntegral
from .formats import read_djfv, write_djfv, write_pgm
from .jpeg_codec import encode_jpeg

log = logging.getLogger(__name__)

QF_GRID = tuple(range(50, 100, 5))
SCALES = (64, 128, 256)
MANIFEST_FIELDS = ["path", "label", "qf1", "qf2", "scale", "x", "y", "image", "split"]
IMAGE_FIELDS = ["path", "mask", "qf1", "qf2", "image", "split"]
TAMPERED, AUTHENTIC = 1, 0


def qf_pairs(grid) -> list[tuple[int, int]]:
    """Every (qf1, qf2) combination of a quality grid."""
    grid = sorted(set(int(q) for q in grid))
    for q in grid:
        if q not in QF_GRID:
            raise ValueError(f"quality factor {q} not in {{50, 55, ..., 95}}")
    return [(a, b) for a in grid for b in grid]


def _as_pairs(qf_grid) -> list[tuple[int, int]]:
    items = list(qf_grid)
    if items and isinstance(items[0], (tuple, list)):
        pairs = [(int(a), int(b)) for a, b in items]
        for a, b in pairs:
            if a not in QF_GRID or b not in QF_GRID:
                raise ValueError(f"quality pair ({a}, {b}) outside {{50, 55, ..., 95}}")
        return pairs
    return qf_pairs(items)


def workers_from_env() -> int:
    value = os.environ.get("DJF_THREADS")
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


@dataclass
class BlockSample:
    features: np.ndarray
    label: int
    qf1: int
    qf2: int
    scale: int
    x: int
    y: int
    path: str = ""
    image: str = ""


@dataclass
class Manifest:
    """Block samples loaded from disk: records plus a (n, 279) feature matrix."""

    path: Path
    records: list[dict]
    features: np.ndarray = field(repr=False)

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(r["label"]) for r in self.records], dtype=np.intp)

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray, list[dict]]:
        idx = [i for i, r in enumerate(self.records) if r["split"] == name]
        return self.features[idx], self.labels[idx], [self.records[i] for i in idx]


def left_half_region(width: int, height: int) -> tuple[int, int, int, int]:
    return (0, 0, (width // 2) // 8 * 8, height)


def block_labels(mask: np.ndarray, scale: int):
    """Non-overlapping scale x scale blocks that lie wholly inside or outside the mask."""
    h, w = mask.shape
    out = []
    for y in range(0, h - scale + 1, scale):
        for x in range(0, w - scale + 1, scale):
            frac = mask[y:y + scale, x:x + scale].mean()
            if frac == 1:
                out.append((x, y, TAMPERED))
            elif frac == 0:
                out.append((x, y, AUTHENTIC))
    return out


def _balance(items, rng):
    """Subsample the larger class so both classes have equal counts."""
    pos = [s for s in items if s[2] == TAMPERED]
    neg = [s for s in items if s[2] == AUTHENTIC]
    n = min(len(pos), len(neg))
    if len(pos) > n:
        pos = [pos[i] for i in sorted(rng.choice(len(pos), n, replace=False))]
    if len(neg) > n:
        neg = [neg[i] for i in sorted(rng.choice(len(neg), n, replace=False))]
    return sorted(pos + neg, key=lambda s: (s[1], s[0]))


def _process_image(args):
    """Tamper one image for every pair; return block samples per (pair, scale)."""
    index, name, img, pairs, scales, out_dir, seed = args
    out_dir = Path(out_dir)
    h, w = img.shape
    region = left_half_region(w, h)
    results = []
    for qf1, qf2 in pairs:
        coeffs, mask = tamper(img, TamperSpec(qf1, qf2, region))
        stem = f"{name}_{qf1}_{qf2}"
        jpg = f"images/{stem}.jpg"
        (out_dir / jpg).write_bytes(encode_jpeg(coeffs))
        write_pgm(out_dir / f"masks/{stem}.pgm", mask * 255)
        integral = HistogramIntegral(coeffs)
        per_scale = {}
        for scale in scales:
            rng = np.random.default_rng([seed, index, qf1, qf2, scale])
            blocks = _balance(block_labels(mask, scale), rng)
            feats = (integral.regions([(x, y) for x, y, _ in blocks], (scale, scale))
                     if blocks else np.zeros((0, FEATURE_DIM), np.float32))
            per_scale[scale] = (blocks, feats)
        results.append((qf1, qf2, jpg, f"masks/{stem}.pgm", per_scale))
    return index, name, results


def _splits(n_images: int, seed: int, val_fraction: float) -> list[str]:
    order = np.random.default_rng(seed).permutation(n_images)
    n_val = int(round(val_fraction * n_images))
    if n_images > 1:
        n_val = min(max(n_val, 1), n_images - 1)
    split = ["train"] * n_images
    for i in order[:n_val]:
        split[i] = "val"
    return split


def _run(corpus, names, pairs, scales, out_dir, seed, workers):
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    if not corpus:
        raise ValueError("corpus is empty")
    corpus = [check_raw(img) for img in corpus]
    names = list(names) if names is not None else [f"img{i:04d}" for i in range(len(corpus))]
    jobs = [(i, names[i], img, pairs, scales, str(out), seed) for i, img in enumerate(corpus)]
    workers = workers or workers_from_env()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_process_image, jobs))
    else:
        results = [_process_image(j) for j in jobs]
    return results, names


def _write_manifest(out: Path, key, rows, feats):
    path = out / f"manifest_{key}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    write_djfv(out / f"features_{key}.djfv",
               np.concatenate(feats) if feats else np.zeros((0, FEATURE_DIM), np.float32))
    log.info("wrote %s (%d samples)", path, len(rows))
    return path


def _write_images_csv(out: Path, results, split):
    path = out / "images.csv"
    existing = {}
    if path.exists():
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                existing[r["path"]] = r
    for index, name, res in results:
        for qf1, qf2, jpg, mask, _ in res:
            existing[jpg] = {"path": jpg, "mask": mask, "qf1": qf1, "qf2": qf2,
                             "image": name, "split": split[index]}
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=IMAGE_FIELDS)
        writer.writeheader()
        writer.writerows(existing[k] for k in sorted(existing))
    return path


def make_synthetic_dataset(corpus, qf_grid=QF_GRID, scales=SCALES, out_dir=".", *, names=None,
                           seed: int = 0, val_fraction: float = 0.2, workers: int | None = None) -> dict:
    """Build balanced per-scale block sets from a raw corpus.

    ``qf_grid`` is either a list of quality factors (all pairs are used) or an
    explicit list of (qf1, qf2) pairs. Returns {scale: manifest path}.
    """
    pairs = _as_pairs(qf_grid)
    scales = tuple(int(s) for s in scales)
    results, names = _run(corpus, names, pairs, scales, out_dir, seed, workers)
    split = _splits(len(corpus), seed, val_fraction)
    out = Path(out_dir)
    manifests = {}
    for scale in scales:
        rows, feats = [], []
        for index, name, res in results:
            for qf1, qf2, jpg, _, per_scale in res:
                blocks, f = per_scale[scale]
                rows += [{"path": jpg, "label": lab, "qf1": qf1, "qf2": qf2, "scale": scale,
                          "x": x, "y": y, "image": name, "split": split[index]}
                         for x, y, lab in blocks]
                feats.append(f)
        manifests[scale] = _write_manifest(out, scale, rows, feats)
    _write_images_csv(out, results, split)
    return manifests


def make_special_dataset(corpus, qf_grid=QF_GRID, out_dir=".", *, names=None, seed: int = 0,
                         val_fraction: float = 0.2, workers: int | None = None) -> Path:
    """64x64 set for the discriminative network.

    Positives are tampered blocks from pairs with qf1 > qf2; negatives are
    doubly compressed blocks drawn from every pair, matched in count per image.
    """
    pairs = _as_pairs(qf_grid)
    if not any(a > b for a, b in pairs):
        raise ValueError("special dataset needs at least one pair with qf1 > qf2")
    results, names = _run(corpus, names, pairs, (64,), out_dir, seed, workers)
    split = _splits(len(corpus), seed, val_fraction)
    rows, feats = [], []
    for index, name, res in results:
        pos, neg = [], []
        for qf1, qf2, jpg, _, per_scale in res:
            blocks, f = per_scale[64]
            for (x, y, lab), vec in zip(blocks, f):
                rec = {"path": jpg, "label": lab, "qf1": qf1, "qf2": qf2, "scale": 64,
                       "x": x, "y": y, "image": name, "split": split[index]}
                if lab == TAMPERED and qf1 > qf2:
                    pos.append((rec, vec))
                elif lab == AUTHENTIC:
                    neg.append((rec, vec))
        rng = np.random.default_rng([seed, index, 1])
        n = min(len(pos), len(neg))
        pick_pos = sorted(rng.choice(len(pos), n, replace=False)) if n < len(pos) else range(len(pos))
        pick_neg = sorted(rng.choice(len(neg), n, replace=False))
        chosen = [pos[i] for i in pick_pos] + [neg[i] for i in pick_neg]
        rows += [r for r, _ in chosen]
        feats.append(np.array([v for _, v in chosen], dtype=np.float32).reshape(-1, FEATURE_DIM))
    _write_images_csv(Path(out_dir), results, split)
    return _write_manifest(Path(out_dir), "special", rows, feats)


def load_manifest(path) -> Manifest:
    path = Path(path)
    with open(path, newline="") as fh:
        records = list(csv.DictReader(fh))
    key = path.stem.split("_", 1)[1]
    feats = read_djfv(path.with_name(f"features_{key}.djfv"))
    if len(feats) != len(records):
        raise ValueError(f"{path}: {len(records)} records but {len(feats)} feature rows")
    for r in records:
        for k in ("label", "qf1", "qf2", "scale", "x", "y"):
            r[k] = int(r[k])
    return Manifest(path, records, feats)


def load_image_records(path) -> list[dict]:
    with open(path, newline="") as fh:
        records = list(csv.DictReader(fh))
    for r in records:
        r["qf1"], r["qf2"] = int(r["qf1"]), int(r["qf2"])
    return records
