import numpy as np
import pytest

import metric_oracle as oracle
from camoadapt import metrics as m


def fixtures(n, seed=0, size=8):
    r = np.random.default_rng(seed)
    out = []
    for k in range(n):
        gt = r.random((size, size)) < r.uniform(0.1, 0.7)
        if not gt.any():
            gt[r.integers(size), r.integers(size)] = True
        kind = k % 3
        if kind == 0:
            pred = r.random((size, size))
        elif kind == 1:
            pred = np.clip(gt * 0.7 + r.random((size, size)) * 0.4, 0, 1)
        else:
            pred = np.round(r.random((size, size)) * 255) / 255  # values sit exactly on thresholds
        out.append((pred, gt))
    return out


# ----------------------------------------------------------------------
# oracle equivalence
# ----------------------------------------------------------------------
@pytest.mark.parametrize("pred,gt", fixtures(50), ids=[f"fx{i}" for i in range(50)])
def test_matches_oracle(pred, gt):
    lib = [m.mae(pred, gt), m.max_f_measure(pred, gt), m.weighted_f_measure(pred, gt), m.s_measure(pred, gt),
           *m.e_measures(pred, gt)]
    ref = [oracle.mae(pred, gt), oracle.max_f(pred, gt), oracle.weighted_f(pred, gt), oracle.s_measure(pred, gt),
           *oracle.e_measures(pred, gt)]
    np.testing.assert_allclose(lib, ref, atol=1e-6)


@pytest.mark.parametrize("gt", [np.zeros((6, 6), bool), np.ones((6, 6), bool)], ids=["empty", "full"])
def test_degenerate_gt_matches_oracle(gt, rng):
    pred = rng.random((6, 6))
    assert m.s_measure(pred, gt) == pytest.approx(oracle.s_measure(pred, gt), abs=1e-12)
    np.testing.assert_allclose(m.e_measures(pred, gt), oracle.e_measures(pred, gt), atol=1e-12)


# ----------------------------------------------------------------------
# hand examples
# ----------------------------------------------------------------------
def test_mae_examples():
    gt = np.zeros((4, 4), bool)
    assert m.mae(gt.astype(float), gt) == 0.0
    assert m.mae(np.ones((4, 4)), gt) == 1.0
    assert m.mae(np.full((4, 4), 0.25), gt) == 0.25


def test_shape_mismatch():
    with pytest.raises(ValueError):
        m.mae(np.zeros((3, 3)), np.zeros((4, 4)))


def test_max_f_hand_fixture():
    gt = np.zeros((4, 4), bool)
    gt[0, :3] = True  # three positives
    pred = np.zeros((4, 4))
    pred[0, :2] = 1.0  # two true positives
    pred[3, 3] = 1.0  # one false positive; gt[0, 2] is the false negative
    assert m.max_f_measure(pred, gt) == pytest.approx(2 / 3)


def test_f_zero_cases():
    gt = np.zeros((4, 4), bool)
    gt[1, 1] = True
    assert m.max_f_measure(np.zeros((4, 4)), gt) == 0.0
    assert m.f_beta(0, 0, 0) == 0.0


def test_perfect_prediction_scores():
    gt = np.zeros((8, 8), bool)
    gt[2:6, 1:5] = True
    r = m.evaluate_pair(gt.astype(float), gt)
    assert r.M == 0.0
    for v in (r.Fx, r.Fw, r.Sm, r.Ex, r.aE):
        assert v == pytest.approx(1.0, abs=1e-6)


def test_inverse_prediction():
    gt = np.array([[0, 1, 1, 0], [1, 1, 1, 0], [0, 1, 0, 0], [0, 0, 0, 0]], bool)
    inv = (~gt).astype(float)
    assert m.s_measure(inv, gt) < 0.5
    assert m.s_measure(inv, gt) == pytest.approx(oracle.s_measure(inv, gt), abs=1e-12)


def test_inverse_prediction_balanced():
    gt = np.zeros((4, 4), bool)
    gt[:, :2] = True
    inv = (~gt).astype(float)
    assert m.e_measures(inv, gt)[1] == pytest.approx(0.0, abs=1e-6)
    # every quadrant is constant in both maps here, and constant-vs-constant
    # regions count as perfectly similar, so only the object term is lost
    assert m.s_measure(inv, gt) == pytest.approx(0.5)


def test_s_measure_all_background():
    pred = np.full((5, 5), 0.2)
    assert m.s_measure(pred, np.zeros((5, 5), bool)) == pytest.approx(0.8)


def test_e_measure_perfect_at_every_threshold():
    gt = np.zeros((6, 6), bool)
    gt[1:4, 2:5] = True
    for k in range(0, 255, 17):
        fm = gt.astype(float) > k / 255.0
        assert m._enhanced_alignment(fm, gt) == pytest.approx(1.0, abs=1e-12)


def test_weighted_f_empty_gt_is_zero():
    assert m.weighted_f_measure(np.random.default_rng(0).random((4, 4)), np.zeros((4, 4), bool)) == 0.0


# ----------------------------------------------------------------------
# invariants
# ----------------------------------------------------------------------
def test_all_metrics_in_unit_interval():
    r = np.random.default_rng(11)
    for _ in range(1000):
        gt = r.random((6, 6)) < r.uniform(0, 1)
        pred = r.random((6, 6)) ** r.uniform(0.2, 5)
        vals = m.evaluate_pair(pred, gt).as_row()
        assert all(np.isfinite(v) and -1e-12 <= v <= 1 + 1e-12 for v in vals), vals


def test_pixelwise_metrics_permutation_invariant(rng):
    gt = rng.random((8, 8)) < 0.4
    pred = rng.random((8, 8))
    perm = rng.permutation(64)
    pp, gp = pred.ravel()[perm].reshape(8, 8), gt.ravel()[perm].reshape(8, 8)
    assert m.mae(pp, gp) == pytest.approx(m.mae(pred, gt))
    assert m.max_f_measure(pp, gp) == pytest.approx(m.max_f_measure(pred, gt))


def test_structural_metrics_not_translation_invariant():
    gt = np.zeros((8, 8), bool)
    gt[1:4, 1:4] = True
    pred = np.zeros((8, 8))
    pred[1:4, 1:3] = 0.9
    pred[5, 6] = 0.6
    shifted_gt, shifted_pred = np.roll(gt, 3, axis=1), np.roll(pred, 3, axis=1)
    assert m.mae(shifted_pred, shifted_gt) == pytest.approx(m.mae(pred, gt))
    assert m._region_score(shifted_pred, shifted_gt) != pytest.approx(m._region_score(pred, gt), abs=1e-6)


# ----------------------------------------------------------------------
# aggregation
# ----------------------------------------------------------------------
def test_single_image_report(rng):
    gt, pred = rng.random((8, 8)) < 0.3, rng.random((8, 8))
    assert m.evaluate_report([pred], [gt]) == m.evaluate_pair(pred, gt)


def test_duplicated_list_same_report(rng):
    gt, pred = rng.random((8, 8)) < 0.3, rng.random((8, 8))
    one = m.evaluate_report([pred], [gt]).as_row()
    np.testing.assert_allclose(m.evaluate_report([pred] * 4, [gt] * 4).as_row(), one, atol=1e-15)


@pytest.mark.parametrize("preds,gts", [([], []), ([np.zeros((2, 2))], [])])
def test_report_errors(preds, gts):
    with pytest.raises(ValueError):
        m.evaluate_report(preds, gts)


def test_report_fields():
    r = m.MetricsReport(0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    assert list(r.as_dict()) == list(m.FIELDS)
    assert r.as_row() == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
