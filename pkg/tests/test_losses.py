from __future__ import annotations

import math

import numpy as np
import pytest

from steps.step01_numerics import ShapeError, Tensor
from steps.step04_anchors.anchors import IGNORE, NEGATIVE, POSITIVE, MatchLabels
from steps.step04_anchors.boxes import Box
from steps.step05_losses.losses import LossConfig, loss_cls, loss_loc, loss_reg, loss_total
from steps.step05_losses.targets import CenterTargetMap, gaussian_center_map, gaussian_radius


def _labels(k: int = 1, h: int = 2, w: int = 2) -> MatchLabels:
    lab = np.full((k, h, w), IGNORE, dtype=np.int8)
    lab[0, 0, 0] = POSITIVE
    lab[0, 1, 1] = NEGATIVE
    targets = np.zeros((4, k, h, w))
    targets[:, 0, 0, 0] = [0.5, -0.25, 0.1, 0.0]
    return MatchLabels(lab, targets)


def test_loss_cls_at_even_logits_is_log_two():
    value = loss_cls(Tensor(np.zeros((2, 2, 2))), _labels()).item()
    assert value == pytest.approx(math.log(2.0))


def test_loss_reg_is_l1_over_positives():
    assert loss_reg(Tensor(np.zeros((4, 2, 2))), _labels()).item() == pytest.approx(0.85)


def test_loss_reg_without_positives_is_zero():
    labels = MatchLabels.all_negative((1, 2, 2))
    assert loss_reg(Tensor(np.ones((4, 2, 2))), labels).item() == 0.0


def test_loss_loc_at_even_logits():
    values = np.array([[1.0, 0.5], [0.25, 0.0]])
    target = CenterTargetMap(values, (0, 0), 1.0)
    assert loss_loc(Tensor(np.zeros((2, 2, 2))), target).item() == pytest.approx(2.0 * math.log(2.0))


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        loss_cls(Tensor(np.zeros((4, 2, 2))), _labels())
    with pytest.raises(ShapeError):
        loss_loc(Tensor(np.zeros((2, 3, 3))), CenterTargetMap(np.zeros((2, 2)), (0, 0), 1.0))


def test_loss_total_weights_terms():
    cfg = LossConfig(lambda_cls=2.0, lambda_reg=0.5, lambda_loc=0.0)
    parts = loss_total(Tensor(1.0), Tensor(4.0), Tensor(3.0), cfg)
    assert parts.total == pytest.approx(4.0)
    assert parts.graph.item() == pytest.approx(4.0)
    assert parts.as_record() == {"l_cls": 1.0, "l_reg": 4.0, "l_loc": 3.0, "total": pytest.approx(4.0)}


def test_negative_pair_drops_reg_and_loc():
    parts = loss_total(Tensor(1.0), Tensor(4.0), Tensor(3.0), LossConfig(), is_positive=False)
    assert (parts.l_reg, parts.l_loc, parts.total) == (0.0, 0.0, 1.0)


def test_gaussian_map_peaks_on_centered_object():
    target = gaussian_center_map(Box(127.0, 127.0, 64.0, 64.0), 25, 25, 8, search_size=255)
    assert target.center == (12, 12)
    assert target.values[12, 12] == 1.0
    assert target.values.max() == 1.0
    assert target.values[12, 13] == pytest.approx(target.values[13, 12])
    assert target.values[12, 13] < 1.0


def test_gaussian_map_follows_offset():
    target = gaussian_center_map(Box(127.0 + 16.0, 127.0 - 8.0, 40.0, 40.0), 25, 25, 8, search_size=255)
    assert target.center == (11, 14)


def test_gaussian_radius_is_positive_and_grows_with_size():
    assert 0.0 < gaussian_radius(2.0, 2.0) < gaussian_radius(8.0, 8.0)


def test_loss_cls_is_invariant_to_joint_cell_permutation(rng):
    k, h, w = 3, 4, 4
    logits = rng.normal(size=(2, k, h, w))
    lab = rng.choice(np.array([POSITIVE, NEGATIVE, IGNORE], dtype=np.int8), size=(k, h, w))
    lab[0, 0, 0] = POSITIVE
    perm = rng.permutation(k * h * w)
    shuffled_logits = logits.reshape(2, -1)[:, perm].reshape(2 * k, h, w)
    shuffled_lab = lab.ravel()[perm].reshape(k, h, w)
    base = loss_cls(Tensor(logits.reshape(2 * k, h, w)), MatchLabels(lab, np.zeros((4, k, h, w)))).item()
    moved = loss_cls(Tensor(shuffled_logits), MatchLabels(shuffled_lab, np.zeros((4, k, h, w)))).item()
    assert moved == pytest.approx(base, abs=1e-12)


def test_loss_loc_is_invariant_to_joint_cell_permutation(rng):
    logits = rng.normal(size=(2, 5, 5))
    values = rng.uniform(size=(5, 5))
    perm = rng.permutation(25)
    base = loss_loc(Tensor(logits), CenterTargetMap(values, (2, 2), 1.0)).item()
    moved = loss_loc(
        Tensor(logits.reshape(2, -1)[:, perm].reshape(2, 5, 5)),
        CenterTargetMap(values.ravel()[perm].reshape(5, 5), (2, 2), 1.0),
    ).item()
    assert moved == pytest.approx(base, abs=1e-12)


@pytest.mark.parametrize("size", [10.0, 64.0, 150.0])
def test_gaussian_map_has_exp_minus_half_at_distance_sigma(size):
    target = gaussian_center_map(Box(127.0, 127.0, size, size), 25, 25, 8, search_size=255)
    i0, j0 = target.center
    ii, jj = np.indices(target.values.shape)
    dist2 = (ii - i0) ** 2 + (jj - j0) ** 2
    visible = target.values > 1e-200
    # log-Profil: -2 sigma^2 log(v) == Abstand^2, also v = exp(-1/2) bei Abstand sigma
    np.testing.assert_allclose(-2.0 * target.sigma ** 2 * np.log(target.values[visible]), dist2[visible], atol=1e-9)
    assert target.values[i0, j0 + 1] == pytest.approx(math.exp(-0.5 / target.sigma ** 2))


def test_gaussian_radius_floor_gives_sigma_one_third():
    target = gaussian_center_map(Box(127.0, 127.0, 2.0, 2.0), 25, 25, 8, search_size=255)
    assert target.sigma == pytest.approx(1.0 / 3.0)
