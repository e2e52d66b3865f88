from __future__ import annotations

import math

import numpy as np
import orjson
import pytest
from pydantic import ValidationError

from steps.step01_numerics import ParamStore
from steps.step04_anchors.anchors import AnchorConfig
from steps.step04_anchors.boxes import Box
from steps.step05_losses.losses import LossConfig
from steps.step06_training.augment import LUMA, AugmentFlags, augment, hflip, to_gray
from steps.step06_training.imaging import box_to_patch, context_size, crop_patch
from steps.step06_training.optim import SGD, LrScheduleConfig, clip_grad_norm, lr_schedule, sgd_step
from steps.step06_training.sampling import PairConfig, draw_pair_spec, sample_pair
from steps.step06_training.synthetic import SyntheticConfig, SyntheticTrackStore, constant_velocity_sequence
from steps.step06_training.trainer import (
    LOG_FILE,
    PhaseConfig,
    StageConfig,
    TrainConfig,
    TrainContext,
    default_stages,
    missing_gradients,
    train_stages,
)

SMALL_STORE = SyntheticConfig(num_tracks=2, frames_per_track=20, frame_size=200)


def _cfg(stages, **kw) -> TrainConfig:
    return TrainConfig(
        iterations_per_epoch=1, stages=tuple(stages), synthetic=SMALL_STORE,
        augment=AugmentFlags.off(), **kw,
    )


def _one_epoch_stages():
    return [
        StageConfig(index=s.index, phases=tuple(p.model_copy(update={"epochs": 1}) for p in s.phases))
        for s in default_stages()
    ]


# ----------------- Lernrate und SGD -----------------
@pytest.mark.parametrize("epoch, expected", [(1, 0.001), (3, 0.003), (5, 0.005), (20, 0.0005)])
def test_lr_schedule_examples(epoch, expected):
    assert lr_schedule(epoch) == pytest.approx(expected)


def test_lr_schedule_is_log_linear_after_warmup():
    lrs = [lr_schedule(e) for e in range(5, 21)]
    ratios = np.diff(np.log(lrs))
    np.testing.assert_allclose(ratios, np.full(len(ratios), ratios[0]))


def test_lr_schedule_rejects_bad_input():
    with pytest.raises(ValueError):
        lr_schedule(0)
    with pytest.raises(ValidationError):
        LrScheduleConfig(warmup_epochs=6, total_epochs=5)


def test_sgd_step_hand_cases():
    p, v = sgd_step(np.array([1.0]), np.array([1.0]), np.zeros(1), 0.1, 0.0, 0.0)
    assert (p[0], v[0]) == pytest.approx((0.9, 1.0))
    p, v = sgd_step(np.array([1.0]), np.array([1.0]), np.array([0.5]), 0.1, 0.9, 0.0)
    assert v[0] == pytest.approx(1.45)
    assert p[0] == pytest.approx(1.0 - 0.145)


def test_sgd_updates_only_named_params():
    store = ParamStore()
    store.add("cls.a", np.ones(2))
    store.add("backbone.b", np.ones(2))
    grads = {"cls.a": np.ones(2), "backbone.b": np.ones(2)}
    SGD(momentum=0.0, weight_decay=0.0).step(store, grads, 0.5, ["cls.a"])
    assert store["cls.a"].numpy().tolist() == [0.5, 0.5]
    assert store["backbone.b"].numpy().tolist() == [1.0, 1.0]


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(grads, 1.0) == pytest.approx(5.0)
    assert (grads["a"][0], grads["b"][0]) == pytest.approx((0.6, 0.8))


# ----------------- Ausschnitte und Augmentierung -----------------
def test_context_size_square():
    assert context_size(64.0, 64.0) == pytest.approx(128.0)


def test_crop_patch_centre_and_box_mapping():
    frame = np.zeros((100, 100, 3), dtype=np.uint8)
    frame[50, 40] = 255
    patch = crop_patch(frame, (40.0, 50.0), 21.0, 21)
    assert patch[10, 10, 0] == pytest.approx(255.0)
    mapped = box_to_patch(Box(40.0, 50.0, 10.0, 6.0), (40.0, 50.0), 42.0, 21)
    assert (mapped.cx, mapped.cy, mapped.w, mapped.h) == pytest.approx((10.0, 10.0, 5.0, 3.0))


def test_crop_outside_frame_uses_pad_value():
    frame = np.full((10, 10, 3), 7, dtype=np.uint8)
    patch = crop_patch(frame, (-50.0, -50.0), 5.0, 5, pad_value=np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(patch[0, 0], [1.0, 2.0, 3.0])


def test_augment_off_is_identity(rng):
    patch = rng.uniform(0, 255, size=(16, 16, 3))
    box = Box(8.0, 8.0, 4.0, 6.0)
    out, out_box = augment(patch, box, rng, AugmentFlags.off())
    np.testing.assert_array_equal(out, patch)
    assert out_box == box


def test_hflip_mirrors_box():
    _, box = hflip(np.zeros((10, 20, 3)), Box(3.0, 4.0, 2.0, 2.0))
    assert box.cx == 16.0


def test_double_hflip_restores_patch_and_box(rng):
    patch = rng.uniform(0, 255, size=(12, 17, 3))
    box = Box(5.5, 6.0, 3.0, 4.0)
    once, mirrored = hflip(patch, box)
    assert not np.array_equal(once, patch)
    twice, back = hflip(once, mirrored)
    np.testing.assert_array_equal(twice, patch)
    assert back == box


def test_gray_makes_channels_equal(rng):
    patch = rng.uniform(0, 255, size=(9, 9, 3))
    gray = to_gray(patch)
    assert gray.shape == patch.shape
    np.testing.assert_array_equal(gray[..., 0], gray[..., 1])
    np.testing.assert_array_equal(gray[..., 1], gray[..., 2])
    np.testing.assert_allclose(gray[..., 0], patch @ LUMA)


# ----------------- Synthetische Daten und Paare -----------------
def test_synthetic_store_is_deterministic():
    a, b = SyntheticTrackStore(SMALL_STORE), SyntheticTrackStore(SMALL_STORE)
    np.testing.assert_array_equal(a.frame(1, 7), b.frame(1, 7))
    assert a.box(1, 7) == b.box(1, 7)
    with pytest.raises(IndexError):
        a.box(2, 0)


def test_synthetic_boxes_stay_inside_frame():
    store = SyntheticTrackStore(SMALL_STORE)
    for f in range(SMALL_STORE.frames_per_track):
        x1, y1, x2, y2 = store.box(0, f).to_corners()
        assert 0.0 <= x1 < x2 <= 200.0 and 0.0 <= y1 < y2 <= 200.0


def test_fast_motion_moves_faster():
    _, slow = constant_velocity_sequence(2, seed=3)
    _, fast = constant_velocity_sequence(2, seed=3, fast_motion=True)
    step = lambda bs: math.hypot(bs[1].cx - bs[0].cx, bs[1].cy - bs[0].cy)  # noqa: E731
    assert step(fast) == pytest.approx(4.0 * step(slow))


def test_sample_pair_shapes_and_negatives(rng):
    store = SyntheticTrackStore(SMALL_STORE)
    pos = sample_pair(store, rng, PairConfig(pos_fraction=1.0), exemplar_size=127, search_size=127)
    assert pos.template_patch.shape == (127, 127, 3)
    assert pos.search_patch.shape == (127, 127, 3)
    assert pos.is_positive and pos.spec.template_track == pos.spec.search_track
    neg = sample_pair(store, rng, PairConfig(pos_fraction=0.0), exemplar_size=127, search_size=127)
    assert not neg.is_positive and neg.spec.template_track != neg.spec.search_track


def test_pair_draws_are_four_to_one_positive():
    store = SyntheticTrackStore(SyntheticConfig(num_tracks=3, frames_per_track=250, frame_size=200))
    rng = np.random.default_rng(99)
    specs = [draw_pair_spec(store, rng, PairConfig()) for _ in range(10_000)]
    positives = [s for s in specs if s.is_positive]
    assert len(positives) / len(specs) == pytest.approx(0.8, abs=0.02)
    assert all(s.template_track == s.search_track for s in positives)
    assert max(abs(s.search_frame - s.template_frame) for s in positives) < 100
    assert all(s.template_track != s.search_track for s in specs if not s.is_positive)


# ----------------- Trainingsplan -----------------
def test_default_stages_follow_three_stage_plan():
    stages = default_stages()
    assert [s.total_epochs for s in stages] == [20, 20, 20]
    assert stages[0].phases[0].trainable == ("cls", "reg")
    assert "backbone" not in stages[1].phases[0].trainable
    assert stages[2].phases[0].trainable == ("attention",)
    assert [p.attention for s in stages for p in s.phases] == [False, False, False, False, True, True]


def test_anchor_count_mismatch_is_rejected(tiny_model):
    with pytest.raises(ValueError):
        TrainContext.build(tiny_model, AnchorConfig(ratios=(1.0,)), LossConfig())


def test_first_phase_freezes_backbone(tiny_model, tiny_params):
    before = tiny_params.state()
    stage = StageConfig(index=1, phases=(PhaseConfig(name="heads", epochs=1, trainable=("cls", "reg")),))
    train_stages(tiny_model, AnchorConfig(), LossConfig(), _cfg([stage]), params=tiny_params, seed=1)
    after = tiny_params.state()
    for name in tiny_params.select(["backbone", "loc", "attention"]):
        np.testing.assert_array_equal(after[name], before[name])
    changed = [n for n in tiny_params.select(["cls", "reg"]) if not np.array_equal(after[n], before[n])]
    assert changed
    assert all(tiny_params[n].requires_grad for n in tiny_params)


def test_train_stages_writes_log_and_checkpoints(tiny_model, tmp_path):
    result = train_stages(tiny_model, AnchorConfig(), LossConfig(), _cfg(_one_epoch_stages()), seed=0, out_dir=tmp_path)
    assert len(result.records) == 6
    assert result.records["lr"].tolist() == pytest.approx([0.001, 0.005] * 3)
    assert result.records["stage"].tolist() == [1, 1, 2, 2, 3, 3]
    assert np.isfinite(result.records["total"]).all()
    names = sorted(p.name for p in result.checkpoints)
    assert names == sorted(["stage1_heads.smc", "stage1_joint.smc", "stage2_branches.smc",
                            "stage2_all.smc", "stage3_attention.smc", "stage3_all.smc"])
    lines = (tmp_path / LOG_FILE).read_bytes().splitlines()
    assert [orjson.loads(line)["step"] for line in lines] == [1, 2, 3, 4, 5, 6]
    assert set(result.summary()["phase"]) == {"heads", "joint", "branches", "all", "attention"}


def test_every_trainable_param_gets_a_gradient(tiny_model, tiny_params, rng):
    ctx = TrainContext.build(tiny_model, AnchorConfig(), LossConfig())
    store = SyntheticTrackStore(SMALL_STORE)
    pair = sample_pair(store, rng, PairConfig(pos_fraction=1.0, search_shift=0.0, scale_jitter=0.0), exemplar_size=127, search_size=127)
    names = tiny_params.names()
    assert missing_gradients(tiny_params, pair, names, ctx, attention_enabled=True) == []
    missing = missing_gradients(tiny_params, pair, names, ctx, attention_enabled=False)
    assert missing and all(n.startswith("attention.") for n in missing)


def test_training_is_reproducible_for_a_seed(tiny_model):
    stage = StageConfig(index=1, phases=(PhaseConfig(name="heads", epochs=2, trainable=("cls", "reg")),))
    cfg = _cfg([stage], fixed_pairs=1, momentum=0.0)
    a = train_stages(tiny_model, AnchorConfig(), LossConfig(), cfg, seed=5)
    b = train_stages(tiny_model, AnchorConfig(), LossConfig(), cfg, seed=5)
    assert a.records["total"].tolist() == b.records["total"].tolist()


@pytest.mark.slow
def test_overfitting_a_fixed_pair_set_lowers_the_loss(tiny_model):
    stage = StageConfig(index=1, phases=(PhaseConfig(name="joint", epochs=1, trainable=("backbone", "cls", "reg", "loc")),))
    cfg = TrainConfig(
        iterations_per_epoch=60, stages=(stage,), fixed_pairs=2, synthetic=SMALL_STORE,
        augment=AugmentFlags.off(), pairs=PairConfig(pos_fraction=1.0),
        lr=LrScheduleConfig(start_lr=0.01, peak_lr=0.01, end_lr=0.01, warmup_epochs=1, total_epochs=1),
    )
    totals = train_stages(tiny_model, AnchorConfig(), LossConfig(), cfg, seed=0).records["total"].to_numpy()
    assert totals[-10:].mean() < totals[:10].mean()
