from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqforensics.compression_sim import TamperSpec, tamper
from dqforensics.corpus import synthesize_image
from dqforensics.jpeg_codec import encode_jpeg
from dqforensics.localization import (CSV_FIELDS, EvalReport, aggregate, binarize, count_windows,
                                      covered_area, detect, evaluate_grid, rates, score, score_counts,
                                      window_origins)
from dqforensics.msd_net import MsdModel
from dqforensics.nn_core import build_network


def brute_force_windows(width, height, window=64, stride=8):
    n = 0
    for y in range(0, height):
        for x in range(0, width):
            if x % stride == 0 and y % stride == 0 and x + window <= width and y + window <= height:
                n += 1
    return n


def test_window_count_examples():
    assert count_windows(512, 384) == 57 * 41 == 2337
    assert count_windows(64, 64) == 1
    assert count_windows(71, 71) == 1
    assert count_windows(72, 64) == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(64, 300), st.integers(64, 300))
def test_window_count_matches_enumeration(w, h):
    assert count_windows(w, h) == brute_force_windows(w, h) == len(window_origins(w, h))


def test_window_count_too_small():
    with pytest.raises(ValueError):
        count_windows(63, 100)


@pytest.fixture(scope="module")
def model():
    nets = [build_network(maps=3, hidden=8, rng=np.random.default_rng(i)) for i in range(4)]
    return MsdModel(*nets, threshold=0.5)


@pytest.fixture(scope="module")
def jpeg():
    img = synthesize_image(np.random.default_rng(2), 128, 96)
    coeffs, mask = tamper(img, TamperSpec(50, 90, (0, 0, 64, 96)))
    return encode_jpeg(coeffs), mask


def test_detect_layout(model, jpeg):
    data, _ = jpeg
    det = detect(model, data)
    assert det.prob_map.shape == (96, 128) and det.prob_map.dtype == np.float32
    assert det.n_windows == count_windows(128, 96) == 45
    cover = covered_area(128, 96)
    assert not det.prob_map[~cover].any()
    assert not det.prob_map[:28].any() and not det.prob_map[:, :28].any()
    # every central cell is constant and equals its window's probability
    for (x, y), p in zip(det.origins, det.window_probs):
        cell = det.prob_map[y + 28:y + 36, x + 28:x + 36]
        assert np.all(cell == p)


def test_route_map_matches_summary(model, jpeg):
    cover = covered_area(128, 96)
    for t in (0.5, 1.0):
        det = detect(MsdModel(*model.networks, threshold=t), jpeg[0])
        assert det.route_map[cover].mean() == pytest.approx(det.special_fraction)
        assert not det.route_map[~cover].any()
    assert det.special_fraction > 0


def test_detect_is_repeatable(model, jpeg):
    a, b = detect(model, jpeg[0]), detect(model, jpeg[0])
    assert a.prob_map.tobytes() == b.prob_map.tobytes()


def test_detect_minimum_image(model):
    img = synthesize_image(np.random.default_rng(0), 64, 64)
    coeffs, _ = tamper(img, TamperSpec(50, 90, (0, 0, 0, 0)))
    det = detect(model, encode_jpeg(coeffs))
    assert det.n_windows == 1
    assert covered_area(64, 64).sum() == 64


def test_binarize():
    m = np.array([[0.0, 0.49, 0.5, 0.9]])
    assert binarize(m).tolist() == [[0, 0, 1, 1]]
    assert not binarize(np.zeros((3, 3))).any()
    assert binarize(m, 0.0).all()
    with pytest.raises(ValueError):
        binarize(m, 1.5)


# ---------------------------------------------------------------- scoring


def test_rates_example():
    r = rates(50, 30, 10, 10)
    assert r["acc"] == Fraction(4, 5)
    assert r["precision"] == r["recall"] == r["f1"] == Fraction(5, 6)


def test_perfect_and_all_positive():
    truth = np.zeros((60, 60), np.uint8)
    truth[:, :30] = 1
    row = score(truth, truth, border=0)
    assert row.acc == 1 and row.f1 == 1
    # all doubly compressed (positive) prediction with P == N
    row = score(np.zeros_like(truth), truth, border=0)
    assert row.recall == 1 and row.precision == 0.5 and row.acc == 0.5


def test_undefined_rates():
    r = rates(0, 10, 0, 0)
    assert r["precision"] is None and r["recall"] is None and r["f1"] is None
    assert r["acc"] == 1
    assert rates(0, 5, 5, 0)["precision"] == 0


def test_border_is_excluded():
    truth = np.zeros((64, 64), np.uint8)
    pred = np.ones((64, 64), np.uint8)
    pred[28:36, 28:36] = 0
    row = score(pred, truth)
    assert (row.tp, row.tn, row.fp, row.fn) == (64, 0, 0, 0)


def test_score_shape_mismatch():
    with pytest.raises(ValueError):
        score(np.zeros((4, 4)), np.zeros((4, 5)))


def test_positive_class_is_doubly_compressed():
    truth = np.array([[1, 1, 0, 0]])
    pred = np.array([[1, 0, 0, 1]])
    row = score(pred, truth, border=0)
    assert (row.tp, row.tn, row.fp, row.fn) == (1, 1, 1, 1)
    assert row.p == 2 and row.n == 2


def test_aggregate_means():
    rows = [score_counts(8, 2, 0, 0, qf1=50, qf2=90), score_counts(4, 4, 2, 0, qf1=50, qf2=90),
            score_counts(1, 1, 1, 1, qf1=90, qf2=90)]
    cells, per_qf2 = aggregate(rows)
    assert cells[(50, 90)].acc == pytest.approx((1.0 + 0.8) / 2)
    assert cells[(50, 90)].tp == 12
    assert per_qf2[90]["acc"] == pytest.approx(((1.0 + 0.8) / 2 + 0.5) / 2)


def test_report_csv(tmp_path):
    rows = [score_counts(8, 2, 0, 0, qf1=50, qf2=90), score_counts(0, 10, 0, 0, qf1=90, qf2=50)]
    cells, per_qf2 = aggregate(rows)
    paths = EvalReport(rows, cells, per_qf2).write_csv(tmp_path / "r.csv")
    lines = paths[0].read_text().splitlines()
    assert lines[0].split(",") == CSV_FIELDS
    assert lines[1].startswith("50,90,1.000000")
    # undefined precision written as an empty field, not 0
    assert lines[2].split(",")[3] == ""
    assert paths[1].name == "r_qf2.csv"


def test_evaluate_grid_reports_bad_records(tmp_path, model, jpeg):
    data, mask = jpeg
    (tmp_path / "a.jpg").write_bytes(data)
    from dqforensics.formats import write_pgm
    write_pgm(tmp_path / "a.pgm", mask * 255)
    (tmp_path / "bad.jpg").write_bytes(b"not a jpeg")
    records = [{"path": "a.jpg", "mask": "a.pgm", "qf1": 50, "qf2": 90},
               {"path": "bad.jpg", "mask": "a.pgm", "qf1": 50, "qf2": 90},
               {"path": "gone.jpg", "mask": "a.pgm", "qf1": 50, "qf2": 90}]
    report = evaluate_grid(model, records, tmp_path)
    assert len(report.rows) == 1 and len(report.errors) == 2
    assert list(report.cells) == [(50, 90)]


def naive_counts(pred, truth):
    tp = tn = fp = fn = 0
    for p, t in zip(pred.ravel(), truth.ravel()):
        if not p and not t:
            tp += 1
        elif p and t:
            tn += 1
        elif not p and t:
            fp += 1
        else:
            fn += 1
    return tp, tn, fp, fn


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_convention_swap(seed):
    rng = np.random.default_rng(seed)
    pred = rng.integers(0, 2, (12, 12))
    truth = rng.integers(0, 2, (12, 12))
    row = score(pred, truth, border=0)
    assert (row.tp, row.tn, row.fp, row.fn) == naive_counts(pred, truth)
    swapped = score(1 - pred, 1 - truth, border=0)
    assert (swapped.tp, swapped.tn, swapped.fp, swapped.fn) == (row.tn, row.tp, row.fn, row.fp)
    assert swapped.precision == row.tamper_precision and swapped.recall == row.tamper_recall
    assert swapped.f1 == row.tamper_f1


def test_random_guess_near_chance():
    rng = np.random.default_rng(0)
    truth = np.repeat([0, 1], 1000)
    guess = rng.integers(0, 2, truth.size)
    row = score(guess[None, :], truth[None, :], border=0)
    assert 0.45 <= row.acc <= 0.55
