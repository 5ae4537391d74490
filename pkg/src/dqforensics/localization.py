"""Sliding-window tamper maps and detection scoring."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .features import HistogramIntegral
from .formats import read_pgm
from .jpeg_codec import parse_jpeg
from .msd_net import TAMPERED_CLASS, MsdModel, classify_blocks, window_features

log = logging.getLogger(__name__)

WINDOW = 64
STRIDE = 8
CELL_OFFSET = 28  # central 8x8 cell of a 64x64 window
CSV_FIELDS = ["qf1", "qf2", "acc", "precision", "recall", "f1", "tp", "tn", "fp", "fn"]


def count_windows(width: int, height: int, window: int = WINDOW) -> int:
    """Number of stride-8 windows (one central cell each) in a width x height image."""
    if width < window or height < window:
        raise ValueError(f"image {width}x{height} smaller than the {window}px window")
    return ((width - window) // STRIDE + 1) * ((height - window) // STRIDE + 1)


def window_origins(width: int, height: int, window: int = WINDOW) -> np.ndarray:
    """(n, 2) array of (x, y) origins in row-major order."""
    count_windows(width, height, window)
    ys, xs = np.mgrid[0:height - window + 1:STRIDE, 0:width - window + 1:STRIDE]
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def covered_area(width: int, height: int, window: int = WINDOW) -> np.ndarray:
    """Boolean mask of the pixels that receive a window's central cell."""
    nx = (width - window) // STRIDE + 1
    ny = (height - window) // STRIDE + 1
    mask = np.zeros((height, width), dtype=bool)
    mask[CELL_OFFSET:CELL_OFFSET + STRIDE * ny, CELL_OFFSET:CELL_OFFSET + STRIDE * nx] = True
    return mask


@dataclass
class Detection:
    prob_map: np.ndarray  # float32 (H, W), tamper probability
    route_map: np.ndarray  # uint8 (H, W), 1 where the special network decided
    origins: np.ndarray
    window_probs: np.ndarray  # (n,) tamper probability per window
    window_special: np.ndarray  # (n,) bool

    @property
    def n_windows(self) -> int:
        return len(self.origins)

    @property
    def special_fraction(self) -> float:
        return float(self.window_special.mean()) if self.n_windows else 0.0

    @property
    def mean_probability(self) -> float:
        return float(self.window_probs.mean()) if self.n_windows else 0.0


def detect(model: MsdModel, jpeg: bytes, use_special: bool = True) -> Detection:
    """Classify every stride-8 64x64 window and paint its central 8x8 cell."""
    coeffs = parse_jpeg(jpeg)
    width, height = coeffs.width, coeffs.height
    origins = window_origins(width, height)
    integral = HistogramIntegral(coeffs)
    h64, h128, h256 = window_features(integral, origins)
    _, probs, special, _ = classify_blocks(model, h64, h128, h256, use_special=use_special)
    p_tamper = probs[:, TAMPERED_CLASS].astype(np.float32)

    prob_map = np.zeros((height, width), dtype=np.float32)
    route_map = np.zeros((height, width), dtype=np.uint8)
    nx = (width - WINDOW) // STRIDE + 1
    ny = (height - WINDOW) // STRIDE + 1
    cells = slice(CELL_OFFSET, CELL_OFFSET + STRIDE * ny), slice(CELL_OFFSET, CELL_OFFSET + STRIDE * nx)
    grid = p_tamper.reshape(ny, nx)
    prob_map[cells] = np.kron(grid, np.ones((STRIDE, STRIDE), np.float32))
    route_map[cells] = np.kron(special.reshape(ny, nx).astype(np.uint8), np.ones((STRIDE, STRIDE), np.uint8))
    return Detection(prob_map, route_map, origins, p_tamper, special)


def binarize(prob_map, threshold: float = 0.5) -> np.ndarray:
    """1 (tampered) where probability >= threshold."""
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    return (np.asarray(prob_map) >= threshold).astype(np.uint8)


@dataclass
class ScoreRow:
    """Confusion counts with the doubly compressed (authentic) class as positive.

    ``None`` marks an undefined rate (zero denominator). The ``tamper_*``
    fields repeat precision/recall/F1 with the tampered class as positive.
    """

    tp: int
    tn: int
    fp: int
    fn: int
    acc: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    tamper_precision: float | None = None
    tamper_recall: float | None = None
    tamper_f1: float | None = None
    qf1: int | None = None
    qf2: int | None = None
    image: str = ""

    @property
    def p(self) -> int:
        return self.tp + self.fn

    @property
    def n(self) -> int:
        return self.tn + self.fp


def _ratio(num: int, den: int):
    return Fraction(num, den) if den else None


def rates(tp: int, tn: int, fp: int, fn: int) -> dict:
    """Exact accuracy, precision, recall and F1 as Fractions (None if undefined)."""
    acc = _ratio(tp + tn, tp + tn + fp + fn)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {"acc": acc, "precision": precision, "recall": recall, "f1": f1}


def _f(x):
    return None if x is None else float(x)


def score_counts(tp: int, tn: int, fp: int, fn: int, **extra) -> ScoreRow:
    r = rates(tp, tn, fp, fn)
    t = rates(tn, tp, fn, fp)
    return ScoreRow(tp, tn, fp, fn, _f(r["acc"]), _f(r["precision"]), _f(r["recall"]), _f(r["f1"]),
                    _f(t["precision"]), _f(t["recall"]), _f(t["f1"]), **extra)


def score(pred_mask, truth_mask, border: int = CELL_OFFSET, valid=None, **extra) -> ScoreRow:
    """Pixel confusion counts, skipping a ``border``-wide frame (and ``~valid``).

    Masks use 1 = tampered (singly compressed), 0 = authentic.
    """
    pred = np.asarray(pred_mask).astype(bool)
    truth = np.asarray(truth_mask).astype(bool)
    if pred.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    keep = np.zeros(pred.shape, dtype=bool)
    h, w = pred.shape
    keep[border:h - border, border:w - border] = True
    if valid is not None:
        keep &= np.asarray(valid, dtype=bool)
    pred, truth = pred[keep], truth[keep]
    tp = int(np.sum(~pred & ~truth))
    tn = int(np.sum(pred & truth))
    fp = int(np.sum(~pred & truth))
    fn = int(np.sum(pred & ~truth))
    return score_counts(tp, tn, fp, fn, **extra)


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass
class EvalReport:
    rows: list[ScoreRow]
    cells: dict = field(default_factory=dict)  # (qf1, qf2) -> aggregated ScoreRow
    per_qf2: dict = field(default_factory=dict)  # qf2 -> {"acc", "f1"}
    errors: list[str] = field(default_factory=list)
    threshold: float = 0.5
    route_threshold: float | None = None

    def write_csv(self, path) -> list[Path]:
        """Cell table to ``path``; per-qf2 averages to ``<stem>_qf2.csv``."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_FIELDS)
            for (q1, q2), r in sorted(self.cells.items()):
                w.writerow([q1, q2, *(_fmt(getattr(r, k)) for k in CSV_FIELDS[2:6]),
                            r.tp, r.tn, r.fp, r.fn])
        side = path.with_name(path.stem + "_qf2.csv")
        with open(side, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["qf2", "acc", "f1"])
            for q2, v in sorted(self.per_qf2.items()):
                w.writerow([q2, _fmt(v["acc"]), _fmt(v["f1"])])
        return [path, side]


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def aggregate(rows: list[ScoreRow]) -> tuple[dict, dict]:
    """Mean metrics per (qf1, qf2) cell with summed counts, and per-qf2 means of the cells."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.qf1, r.qf2), []).append(r)
    cells = {}
    for key, rs in groups.items():
        cells[key] = ScoreRow(
            sum(r.tp for r in rs), sum(r.tn for r in rs), sum(r.fp for r in rs), sum(r.fn for r in rs),
            _mean(r.acc for r in rs), _mean(r.precision for r in rs),
            _mean(r.recall for r in rs), _mean(r.f1 for r in rs),
            _mean(r.tamper_precision for r in rs), _mean(r.tamper_recall for r in rs),
            _mean(r.tamper_f1 for r in rs), qf1=key[0], qf2=key[1])
    per_qf2 = {}
    for q2 in sorted({k[1] for k in cells}):
        col = [c for k, c in cells.items() if k[1] == q2]
        per_qf2[q2] = {"acc": _mean(c.acc for c in col), "f1": _mean(c.f1 for c in col)}
    return cells, per_qf2


def evaluate_grid(model: MsdModel, records: list[dict], base_dir=".", threshold: float = 0.5,
                  use_special: bool = True) -> EvalReport:
    """Detect and score every image record (path, mask, qf1, qf2)."""
    base = Path(base_dir)
    rows, errors = [], []
    for i, rec in enumerate(records):
        try:
            det = detect(model, (base / rec["path"]).read_bytes(), use_special=use_special)
            truth = read_pgm(base / rec["mask"]) > 0
            pred = binarize(det.prob_map, threshold)
            h, w = pred.shape
            rows.append(score(pred, truth, valid=covered_area(w, h), qf1=int(rec["qf1"]),
                              qf2=int(rec["qf2"]), image=rec.get("image", "")))
        except (OSError, ValueError, KeyError) as exc:
            msg = f"record {i} ({rec.get('path', '?')}): {exc}"
            log.warning(msg)
            errors.append(msg)
    cells, per_qf2 = aggregate(rows)
    return EvalReport(rows, cells, per_qf2, errors, threshold, model.threshold)
