import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpanet import metrics

def pr_oracle(pred_u8: np.ndarray, gt: np.ndarray):
    """Pixel enumeration over all 256 thresholds."""
    p = [int(v) for v in pred_u8.ravel()]
    g = [bool(v) for v in gt.ravel()]
    prec, rec = [], []
    for t in range(256):
        tp = sum(1 for a, b in zip(p, g) if a > t and b)
        fp = sum(1 for a, b in zip(p, g) if a > t and not b)
        prec.append(tp / (tp + fp) if tp + fp else 1.0)
        rec.append(tp / sum(g))
    return np.array(prec), np.array(rec)


def f_oracle(prec, rec, beta_sq=0.3):
    out = []
    for p, r in zip(prec, rec):
        out.append(0.0 if p == 0 or r == 0 else (1 + beta_sq) * p * r / (beta_sq * p + r))
    return max(out)


def random_pair(rng, size=16):
    pred = rng.integers(0, 256, (size, size)).astype(np.uint8)
    gt = rng.random((size, size)) < rng.uniform(0.05, 0.95)
    if not gt.any():
        gt[0, 0] = True
    return pred, gt


def test_pr_max_f_and_mae_match_oracle(rng):
    for _ in range(60):
        pred, gt = random_pair(rng)
        curve = metrics.pr_curve(pred, gt)
        prec, rec = pr_oracle(pred, gt)
        np.testing.assert_allclose(curve.precision, prec, atol=1e-12)
        np.testing.assert_allclose(curve.recall, rec, atol=1e-12)
        assert abs(metrics.max_f_measure(curve) - f_oracle(prec, rec)) < 1e-12
        mae_ref = sum(abs(a / 255 - b) for a, b in zip(pred.ravel(), gt.ravel())) / pred.size
        assert abs(metrics.mae(pred, gt) - mae_ref) < 1e-12


def test_f_measure_hand_case():
    assert metrics.f_measure_curve(np.array([1.0]), np.array([0.5]))[0] == pytest.approx(0.8125)
    assert metrics.f_measure_curve(np.array([0.0, 0.7]), np.array([0.3, 0.0])).tolist() == [0.0, 0.0]


def test_real_and_8bit_inputs_agree(rng):
    pred, gt = random_pair(rng)
    real = pred.astype(np.float64) / 255
    assert np.array_equal(metrics.pr_curve(real, gt).precision, metrics.pr_curve(pred, gt).precision)
    assert metrics.mae(real, gt) == pytest.approx(metrics.mae(pred, gt))


def test_mae_cases():
    gt = np.zeros((4, 4))
    gt[:2] = 1
    assert metrics.mae(gt, gt) == 0.0
    assert metrics.mae(np.zeros((4, 4)), gt) == 0.5
    with pytest.raises(ValueError):
        metrics.mae(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_curve_properties(seed):
    rng = np.random.default_rng(seed)
    pred, gt = random_pair(rng, 12)
    curve = metrics.pr_curve(pred, gt)
    assert np.all(np.diff(curve.recall) <= 0)
    assert np.all((curve.precision >= 0) & (curve.precision <= 1))
    s = pred.astype(np.float64) / 255
    assert np.allclose(np.abs(s - gt) + np.abs(1 - s - gt), 1.0)
    for v in (metrics.max_f_measure(curve), metrics.mae(pred, gt), metrics.s_measure(pred, gt)):
        assert 0 <= v <= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_max_f_invariant_under_monotone_level_map(seed):
    rng = np.random.default_rng(seed)
    pred, gt = random_pair(rng, 12)
    # a strictly increasing level map keeps the binarization set as long as
    # level 0 (never above any threshold) maps to itself and nothing else maps to it
    present = np.unique(pred)
    has_zero = int(present[0] == 0)
    targets = np.sort(rng.choice(np.arange(1, 256), size=len(present) - has_zero, replace=False))
    targets = np.concatenate([[0] * has_zero, targets])
    lut = np.zeros(256, np.uint8)
    lut[present] = targets
    a = metrics.max_f_measure(metrics.pr_curve(pred, gt))
    b = metrics.max_f_measure(metrics.pr_curve(lut[pred], gt))
    assert a == b


def test_empty_gt_raises_for_curve():
    with pytest.raises(metrics.EmptyGroundTruthError):
        metrics.pr_curve(np.zeros((3, 3)), np.zeros((3, 3)))


def _has_centroid_tie(gt):
    rows, cols = np.nonzero(gt)
    return any(abs((v.mean() + 1) % 1 - 0.5) < 1e-9 for v in (rows, cols))


def _blob_pair(rng, size):
    yy, xx = np.mgrid[:size, :size]
    cy, cx, r = rng.uniform(3, size - 3), rng.uniform(3, size - 3), rng.uniform(2, size / 3)
    gt = (yy - cy) ** 2 + (xx - cx) ** 2 <= r**2
    pred = np.clip(gt * rng.uniform(0.4, 1.0) + rng.normal(0, 0.25, gt.shape), 0, 1)
    return pred, gt


def test_s_measure_matches_reference_implementation(rng):
    py_sod_metrics = pytest.importorskip("py_sod_metrics")
    checked = 0
    while checked < 150:
        pred, gt = _blob_pair(rng, int(rng.integers(16, 40)))
        if not gt.any() or gt.all() or _has_centroid_tie(gt):
            continue
        ref = py_sod_metrics.Smeasure()
        ref.step(pred=pred, gt=gt, normalize=False)
        assert abs(metrics.s_measure(pred, gt) - ref.get_results()["sm"]) < 1e-6
        ref = py_sod_metrics.Smeasure()
        ref.step(pred=gt.astype(np.float64), gt=gt, normalize=False)
        assert abs(metrics.s_measure(gt.astype(np.float64), gt) - ref.get_results()["sm"]) < 1e-6
        checked += 1


def test_centroid_ties_round_half_up():
    gt = np.zeros((4, 6), bool)
    gt[1, 1:3] = True  # 1-based columns 2 and 3, mean 2.5
    gt[2, 1:3] = True  # 1-based rows 2 and 3, mean 2.5
    assert metrics._centroid(gt) == (3, 3)


def test_s_measure_special_cases():
    gt = np.zeros((8, 8), bool)
    gt[2:6, 2:6] = True
    assert metrics.s_measure(gt.astype(float), gt) == pytest.approx(1.0, abs=1e-6)
    pred = np.random.default_rng(0).random((8, 8))
    assert metrics.s_measure(pred, gt, alpha=1.0) == pytest.approx(metrics.s_object(pred, gt))
    assert metrics.s_measure(pred, np.zeros((8, 8), bool)) == pytest.approx(1 - pred.mean())
    assert metrics.s_measure(pred, np.ones((8, 8), bool)) == pytest.approx(pred.mean())


def test_dataset_uses_mean_curves_and_skips_empty_gt(rng):
    items = []
    for i in range(4):
        pred, gt = random_pair(rng)
        items.append((f"s{i}", pred, gt, 0.5))
    empty = ("e", np.full((16, 16), 10, np.uint8), np.zeros((16, 16), bool), None)
    rep = metrics.evaluate_dataset(items + [empty])
    curves = [metrics.pr_curve(p, g) for _, p, g, _ in items]
    prec = np.mean([c.precision for c in curves], axis=0)
    rec = np.mean([c.recall for c in curves], axis=0)
    assert rep.max_f == pytest.approx(f_oracle(prec, rec), abs=1e-12)
    assert rep.n_excluded == 1
    maes = [metrics.mae(p, g) for _, p, g, _ in items] + [10 / 255]
    assert rep.mae == pytest.approx(np.mean(maes))
    assert rep.s_measure == pytest.approx(np.mean([metrics.s_measure(p, g) for _, p, g, _ in items]))
    with pytest.raises(ValueError):
        metrics.evaluate_dataset([])
