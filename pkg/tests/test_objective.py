import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from camoadapt import numcore as nc
from camoadapt.gradcheck import run_case
from camoadapt.numcore import Value
from camoadapt.objective import dice_ce_loss, fuse_predictions, total_loss


def test_perfect_prediction():
    gt = np.array([[1, 0], [0, 1]], dtype=bool)
    pred = Value(np.where(gt, 1 - 1e-7, 1e-7)[None])
    assert dice_ce_loss(pred, gt).data.item() < 1e-5


def test_half_prediction_by_hand():
    gt = np.array([[1, 0], [1, 0]], dtype=bool)
    got = dice_ce_loss(Value(np.full((1, 2, 2), 0.5)), gt).data.item()
    assert got == pytest.approx(0.5 * (1 - 3 / 5) + 0.5 * math.log(2), abs=1e-9)
    assert got == pytest.approx(0.5466, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, (1, 4, 4), elements=st.floats(0.0, 1.0)), hnp.arrays(bool, (4, 4)))
def test_loss_nonnegative(p, g):
    assert dice_ce_loss(Value(p), g).data.item() >= 0.0


def test_shape_mismatch():
    with pytest.raises(nc.ShapeError):
        dice_ce_loss(Value(np.zeros((1, 4, 4))), np.zeros((3, 3), dtype=bool))


def test_dice_ce_gradient():
    assert run_case("dice_ce_loss").passed


@pytest.fixture
def preds(rng):
    gt = rng.random((6, 6)) < 0.4
    return Value(rng.random((1, 6, 6))), Value(rng.random((1, 6, 6))), gt


def test_lambda_one_drops_kd(preds):
    a, b, gt = preds
    expected = dice_ce_loss(a, gt).data + dice_ce_loss(b, gt).data
    assert total_loss(a, b, gt, Value(np.array(7.0)), lam=1.0).data.item() == pytest.approx(expected.item())


def test_lambda_zero_keeps_only_kd(preds):
    a, b, gt = preds
    assert total_loss(a, b, gt, Value(np.array(0.2)), lam=0.0).data.item() == pytest.approx(0.2)


def test_composite_arithmetic(preds, monkeypatch):
    a, b, gt = preds
    from camoadapt import objective
    monkeypatch.setattr(objective, "dice_ce_loss", lambda p, g: Value(np.array(0.5)))
    assert objective.total_loss(a, b, gt, 0.2, lam=0.9).data.item() == pytest.approx(0.92)


@pytest.mark.parametrize("lam", [-0.1, 1.5])
def test_lambda_range(preds, lam):
    a, b, gt = preds
    with pytest.raises(ValueError):
        total_loss(a, b, gt, 0.0, lam=lam)


def test_depth_absent(preds):
    a, _, gt = preds
    assert total_loss(a, None, gt, 0.0, lam=1.0).data.item() == pytest.approx(dice_ce_loss(a, gt).data.item())


# ----------------------------------------------------------------------
# fusion
# ----------------------------------------------------------------------
def test_fusion_example():
    assert fuse_predictions(np.array([0.8]), np.array([0.4]))[0]


def test_fusion_strict_boundary():
    assert not fuse_predictions(np.array([0.5]), np.array([0.5]))[0]
    assert not fuse_predictions(np.array([0.75]), np.array([0.25]))[0]
    assert fuse_predictions(np.array([0.75]), np.array([0.25 + 1e-9]))[0]


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(np.float64, (5, 5), elements=st.floats(0.0, 1.0)),
       hnp.arrays(np.float64, (5, 5), elements=st.floats(0.0, 1.0)))
def test_fusion_symmetric_and_self_consistent(a, b):
    assert np.array_equal(fuse_predictions(a, b), fuse_predictions(b, a))
    assert np.array_equal(fuse_predictions(a, a), a > 0.5)


def test_fusion_shape_mismatch():
    with pytest.raises(nc.ShapeError):
        fuse_predictions(np.zeros((2, 2)), np.zeros((3, 3)))
