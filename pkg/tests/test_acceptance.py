"""Acceptance gate: one test per criterion, each recording a pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed at the end of the session. Criteria 7 and 8 train the full-size
networks on a 40-image procedural corpus and take several minutes each.
"""
import io
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from dqforensics import nn_core
from dqforensics.cli import main as cli_main
from dqforensics.compression_sim import double_quantize_scalar
from dqforensics.corpus import synthesize_corpus
from dqforensics.dataset import SCALES, make_special_dataset, make_synthetic_dataset
from dqforensics.features import extract_features
from dqforensics.jpeg_codec import CoeffImage, encode_jpeg, parse_jpeg, quality_to_table
from dqforensics.localization import count_windows, rates, score
from dqforensics.msd_net import evaluate_blocks, train_msd
from dqforensics.nn_core import TrainConfig, build_network, grad_check

from conftest import naive_features, random_coeff_image

RESULTS: dict[int, tuple[bool, str]] = {}

DESK_CORPUS_SIZE = 40
DESK_CORPUS_SEED = 1
DESK_EPOCHS = 10


def record(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    assert ok, detail


# ---------------------------------------------------------------- 1


def test_criterion_1_gradient_check(monkeypatch):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    net = build_network(maps=3, hidden=8, rng=np.random.default_rng(7), dtype=np.float64)
    for _ in range(200):
        x = rng.uniform(0, 3, size=279)
        if net.kink_margin(x) > 1e-3:
            break
    err = grad_check(net, x, 1, eps=1e-4)

    real = nn_core.conv1d_backward

    def flipped(*args, **kwargs):
        gx, gw, gb = real(*args, **kwargs)
        return gx, -gw, gb

    monkeypatch.setattr(nn_core, "conv1d_backward", flipped)
    corrupted = grad_check(net, x, 1, eps=1e-4)
    elapsed = time.perf_counter() - start
    record(1, err < 1e-3 and corrupted > 0.1 and elapsed < 60,
           f"max rel err {err:.2e} (< 1e-3), corrupted {corrupted:.3f} (> 0.1), {elapsed:.1f}s (< 60s)")


# ---------------------------------------------------------------- 2


def test_criterion_2_architecture():
    net = build_network(rng=np.random.default_rng(0))
    chain = net.shape_chain()
    lengths = [chain[i][0] for i in (0, 1, 2, 3, 4)] + [chain[i][0] for i in (6, 8, 10)]
    ok = (lengths == [279, 277, 138, 136, 67, 1000, 1000, 2]
          and chain[1] == (277, 100) and chain[4] == (67, 100) and chain[5] == (6700,))
    record(2, ok, "shape chain " + "->".join(map(str, lengths)))


# ---------------------------------------------------------------- 3


def test_criterion_3_jpeg_round_trip():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches, rejected = 0, 0
    for _ in range(500):
        c = random_coeff_image(rng)
        data = encode_jpeg(c)
        if parse_jpeg(data) != c:
            mismatches += 1
        try:
            img = Image.open(io.BytesIO(data))
            img.load()
            if img.size != (c.width, c.height):
                rejected += 1
        except OSError:
            rejected += 1
    elapsed = time.perf_counter() - start
    record(3, mismatches == 0 and rejected == 0 and elapsed < 120,
           f"500 images: {mismatches} mismatches, {rejected} rejected by Pillow, {elapsed:.1f}s (< 120s)")


# ---------------------------------------------------------------- 4


def _interior_empty_bins(values):
    hist = np.bincount(values - values.min())
    return int((hist == 0).sum())


def test_criterion_4_dq_effect():
    xs = np.arange(-200, 201)
    double = _interior_empty_bins(np.array([double_quantize_scalar(int(x), 5, 2) for x in xs]))
    single = _interior_empty_bins(np.array([double_quantize_scalar(int(x), 1, 2) for x in xs]))
    record(4, double >= 1 and single == 0, f"empty interior bins: (5,2) -> {double}, (1,2) -> {single}")


# ---------------------------------------------------------------- 5


def _enumerate_windows(m, n, window=64, stride=8):
    count = 0
    for y in range(0, m, stride):
        for x in range(0, n, stride):
            if y + window <= m and x + window <= n:
                count += 1
    return count


def test_criterion_5_window_count():
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(200):
        m, n = (int(v) for v in rng.integers(64, 1025, size=2))
        if count_windows(n, m) != _enumerate_windows(m, n):
            bad += 1
    spot = count_windows(512, 384)
    record(5, bad == 0 and spot == 2337, f"{bad}/200 disagreements, (512,384) -> {spot}")


# ---------------------------------------------------------------- 6


def test_criterion_6_features():
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(100):
        c = random_coeff_image(rng, spread=12)
        if not np.array_equal(extract_features(c), naive_features(c)):
            bad += 1
    zero = CoeffImage(64, 64, np.zeros((8, 8, 8, 8), int), quality_to_table(75))
    v = extract_features(zero)
    zero_ok = v.shape == (279,) and np.all(v.reshape(9, 31)[:, 15] == 64) and v.sum() == 9 * 64
    record(6, bad == 0 and zero_ok, f"{bad}/100 disagreements with naive counter, zero region ok={zero_ok}")


# ---------------------------------------------------------------- 7 and 8


def _desk_case(root: Path, pair, special_pairs):
    corpus = synthesize_corpus(DESK_CORPUS_SIZE, seed=DESK_CORPUS_SEED)
    manifests = make_synthetic_dataset(corpus, [pair], SCALES, root, seed=0, workers=1)
    manifests["special"] = make_special_dataset(corpus, special_pairs, root, seed=0, workers=1)
    model = train_msd(manifests, TrainConfig(epochs=DESK_EPOCHS, seed=0))
    return model, manifests


@pytest.mark.slow
def test_criterion_7_easy_case(tmp_path):
    start = time.perf_counter()
    # the single pair (50, 90) has no qf1 > qf2 pair, so the special set takes its positives from (90, 50)
    model, manifests = _desk_case(tmp_path, (50, 90), [(50, 90), (90, 50)])
    res = evaluate_blocks(model, manifests[64], split="val")
    net64 = model.histories["64"][-1]["val_acc"]
    elapsed = time.perf_counter() - start
    record(7, res["accuracy"] >= 0.85 and elapsed < 1800,
           f"(50,90) val block accuracy {res['accuracy']:.4f} (>= 0.85; net64 alone {net64:.4f}), "
           f"n={res['n']}, {elapsed / 60:.1f} min")


@pytest.mark.slow
def test_criterion_8_hard_case(tmp_path):
    model, manifests = _desk_case(tmp_path, (90, 50), [(90, 50)])
    with_special = evaluate_blocks(model, manifests[64], split="val", use_special=True)
    without = evaluate_blocks(model, manifests[64], split="val", use_special=False)
    a = with_special["special_fraction"] > 0
    b = with_special["accuracy"] >= 0.50
    c = with_special["accuracy"] >= without["accuracy"] - 0.02
    record(8, a and b and c,
           f"(90,50) special fraction {with_special['special_fraction']:.4f} (> 0), "
           f"accuracy {with_special['accuracy']:.4f} (>= 0.50), "
           f"without special {without['accuracy']:.4f} (with >= without - 0.02), n={with_special['n']}")


# ---------------------------------------------------------------- 9


def _hand_rates(tp, tn, fp, fn):
    acc = Fraction(tp + tn, tp + tn + fp + fn)
    precision = Fraction(tp, tp + fp) if tp + fp else None
    recall = Fraction(tp, tp + fn) if tp + fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = Fraction(2) * precision * recall / (precision + recall)
    return acc, precision, recall, f1


def _masks_for(tp, tn, fp, fn, rng):
    # truth 0 = doubly compressed (positive); prediction 0 = predicted doubly compressed
    truth = np.array([0] * tp + [1] * tn + [1] * fp + [0] * fn, dtype=np.uint8)
    pred = np.array([0] * tp + [1] * tn + [0] * fp + [1] * fn, dtype=np.uint8)
    order = rng.permutation(len(truth))
    return pred[order][None, :], truth[order][None, :]


def test_criterion_9_metrics():
    rng = np.random.default_rng(9)
    bad = 0
    for i in range(50):
        tp, tn, fp, fn = (int(v) for v in rng.integers(0, 40, size=4))
        if i < 3:
            tp, fp = 0, 0  # force undefined precision
        if tp + tn + fp + fn == 0:
            tn = 1
        hand = _hand_rates(tp, tn, fp, fn)
        exact = rates(tp, tn, fp, fn)
        row = score(*_masks_for(tp, tn, fp, fn, rng), border=0)
        if (row.tp, row.tn, row.fp, row.fn) != (tp, tn, fp, fn):
            bad += 1
            continue
        got = (exact["acc"], exact["precision"], exact["recall"], exact["f1"])
        floats = (row.acc, row.precision, row.recall, row.f1)
        if got != hand or floats != tuple(None if h is None else float(h) for h in hand):
            bad += 1
    record(9, bad == 0, f"{bad}/50 configurations differ from hand-computed rationals")


# ---------------------------------------------------------------- 10


def test_criterion_10_determinism(tmp_path, capsys):
    data = tmp_path / "data"
    assert cli_main(["gen", "--synthesize", "3", "--pairs", "50:90,90:50", "--special", "--seed", "4",
                     str(data)]) == 0
    for run in ("a", "b"):
        assert cli_main(["train", str(data), str(tmp_path / f"{run}.msdm"), "--epochs", "1",
                         "--seed", "11"]) == 0
    same_model = (tmp_path / "a.msdm").read_bytes() == (tmp_path / "b.msdm").read_bytes()
    jpg = data / "images" / "syn0000_90_50.jpg"
    for run in ("a", "b"):
        assert cli_main(["detect", str(tmp_path / "a.msdm"), str(jpg), str(tmp_path / f"det_{run}")]) == 0
    same_map = (tmp_path / "det_a.map.f32").read_bytes() == (tmp_path / "det_b.map.f32").read_bytes()
    capsys.readouterr()
    record(10, same_model and same_map,
           f"model files identical={same_model}, probability maps identical={same_map}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
