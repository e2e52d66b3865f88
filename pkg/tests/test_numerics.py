from __future__ import annotations

import numpy as np
import pytest

from steps.step01_numerics import GradTape, NonFiniteError, ParamStore, ShapeError, Tensor, ops, precision
from steps.step01_numerics.container import (
    ContainerFormatError,
    decode_checkpoint,
    encode_checkpoint,
    encode_tensor,
    load_checkpoint,
    read_tensor,
    save_checkpoint,
    write_tensor,
)
from steps.step01_numerics.gradcheck import grad_check
from steps.step01_numerics.params import group_of


def test_tensor_data_is_read_only():
    t = Tensor(np.zeros(3))
    with pytest.raises(ValueError):
        t.data[0] = 1.0
    t.assign_(np.ones(3))
    assert t.numpy().tolist() == [1.0, 1.0, 1.0]


def test_assign_rejects_wrong_shape():
    t = Tensor(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        t.assign_(np.zeros(4))


def test_checked_mode_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        Tensor(np.array([1.0, np.nan]))


def test_fast_mode_uses_float32_and_skips_checks():
    with precision("fast"):
        t = Tensor(np.array([1.0, np.inf]))
        assert t.data.dtype == np.float32
    assert Tensor(np.zeros(1)).data.dtype == np.float64


def test_no_recording_without_requires_grad():
    a = Tensor(np.ones(3))
    with GradTape() as tape:
        ops.relu(a)
    assert len(tape) == 0


def test_gradient_of_sum_of_squares():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    with GradTape() as tape:
        y = ops.sum_(ops.mul(x, x))
    (g,) = tape.gradient(y, [x])
    np.testing.assert_allclose(g, [2.0, -4.0, 6.0])


def test_gradient_requires_scalar_target():
    x = Tensor(np.ones(2), requires_grad=True)
    with GradTape() as tape:
        y = ops.relu(x)
    with pytest.raises(ShapeError):
        tape.gradient(y, [x])


def test_unconnected_sources():
    x = Tensor(np.ones(2), requires_grad=True)
    z = Tensor(np.ones(2), requires_grad=True)
    with GradTape() as tape:
        y = ops.sum_(x)
    assert tape.gradient(y, [z])[0].tolist() == [0.0, 0.0]
    assert tape.gradient(y, [z], unconnected_zero=False) == [None]


def test_tape_cannot_be_entered_twice():
    tape = GradTape()
    with tape:
        with pytest.raises(RuntimeError):
            tape.__enter__()


def test_xcorr_depthwise_matches_manual_sum(rng):
    d = rng.normal(size=(2, 5, 5))
    t = rng.normal(size=(2, 3, 3))
    out = ops.xcorr_depthwise(Tensor(d), Tensor(t)).numpy()
    assert out.shape == (2, 3, 3)
    assert out[1, 2, 0] == pytest.approx(np.sum(d[1, 2:5, 0:3] * t[1]))


def _xcorr_by_channel_conv(d: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.concatenate([
        ops.conv2d(Tensor(d[c:c + 1]), Tensor(t[c][None, None])).numpy() for c in range(d.shape[0])
    ])


@pytest.mark.parametrize("channels", [1, 2, 3, 4])
def test_xcorr_depthwise_equals_channelwise_conv_on_all_shapes(channels):
    r = np.random.default_rng(channels)
    for hd in range(1, 9):
        for wd in range(1, 9):
            d = r.normal(size=(channels, hd, wd))
            for ht in range(1, hd + 1):
                for wt in range(1, wd + 1):
                    t = r.normal(size=(channels, ht, wt))
                    out = ops.xcorr_depthwise(Tensor(d), Tensor(t)).numpy()
                    assert out.shape == (channels, hd - ht + 1, wd - wt + 1)
                    np.testing.assert_allclose(out, _xcorr_by_channel_conv(d, t), rtol=0, atol=1e-12)


def test_xcorr_depthwise_small_examples():
    out = ops.xcorr_depthwise(Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]])), Tensor(np.full((1, 1, 1), 2.0)))
    np.testing.assert_array_equal(out.numpy(), [[[2.0, 4.0], [6.0, 8.0]]])
    d = np.arange(18, dtype=float).reshape(2, 3, 3)
    np.testing.assert_allclose(ops.xcorr_depthwise(Tensor(d), Tensor(d)).numpy().ravel(), (d ** 2).sum(axis=(1, 2)))


def test_conv2d_output_size_with_stride_and_dilation(rng):
    x = Tensor(rng.normal(size=(3, 11, 11)))
    w = Tensor(rng.normal(size=(4, 3, 3, 3)))
    assert ops.conv2d(x, w, stride=2).shape == (4, 5, 5)
    assert ops.conv2d(x, w, dilation=2, padding=2).shape == (4, 11, 11)


def test_conv2d_window_sum_and_scaling():
    x = Tensor(np.arange(1.0, 10.0).reshape(1, 3, 3))
    np.testing.assert_array_equal(ops.conv2d(x, Tensor(np.ones((1, 1, 2, 2)))).numpy(), [[[12.0, 16.0], [24.0, 28.0]]])
    one = ops.conv2d(Tensor(np.full((1, 1, 1), 3.0)), Tensor(np.full((1, 1, 1, 1), 2.0)))
    assert one.numpy().tolist() == [[[6.0]]]


@pytest.mark.parametrize("kh", [1, 3, 5])
def test_conv2d_identity_kernel_returns_input(rng, kh):
    x = rng.normal(size=(3, 6, 7))
    kernel = np.zeros((3, 3, kh, kh))
    for c in range(3):
        kernel[c, c, kh // 2, kh // 2] = 1.0
    out = ops.conv2d(Tensor(x), Tensor(kernel), padding=(kh - 1) // 2)
    np.testing.assert_allclose(out.numpy(), x, rtol=0, atol=1e-15)


def test_conv2d_rejects_channel_mismatch():
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


def test_softmax_sums_to_one(rng):
    s = ops.softmax(Tensor(rng.normal(size=(2, 4, 4))), axis=0).numpy()
    np.testing.assert_allclose(s.sum(axis=0), np.ones((4, 4)), rtol=0, atol=1e-12)


@pytest.mark.parametrize("shift", [-250.0, -1.0, 0.5, 37.25, 900.0])
def test_softmax_is_invariant_to_constant_shift(rng, shift):
    x = rng.normal(size=(3, 5))
    base = ops.softmax(Tensor(x), axis=1).numpy()
    shifted = ops.softmax(Tensor(x + shift), axis=1).numpy()
    np.testing.assert_allclose(shifted, base, rtol=0, atol=1e-12)
    np.testing.assert_allclose(ops.softmax(Tensor(np.full(3, shift)), axis=0).numpy(), np.full(3, 1.0 / 3.0))


def test_softmax_large_logits_do_not_overflow():
    s = ops.softmax(Tensor(np.array([1000.0, 0.0])), axis=0).numpy()
    assert np.all(np.isfinite(s))
    assert s[0] == pytest.approx(1.0)
    assert s[1] == pytest.approx(0.0, abs=1e-300)
    np.testing.assert_array_equal(ops.softmax(Tensor(np.zeros(2)), axis=0).numpy(), [0.5, 0.5])


def test_softmax_rejects_invalid_axis():
    with pytest.raises(ShapeError):
        ops.softmax(Tensor(np.zeros((2, 2))), axis=2)


def test_resize_bilinear_keeps_constant_map():
    out = ops.resize_bilinear(Tensor(np.full((1, 3, 3), 2.5)), 7, 5).numpy()
    np.testing.assert_allclose(out, np.full((1, 7, 5), 2.5))


def test_resize_bilinear_corner_aligned_center():
    out = ops.resize_bilinear(Tensor(np.array([[[0.0, 1.0], [2.0, 3.0]]])), 3, 3).numpy()
    assert out[0, 1, 1] == pytest.approx(1.5)
    np.testing.assert_allclose(out[0, [0, 0, 2, 2], [0, 2, 0, 2]], [0.0, 1.0, 2.0, 3.0])


def test_resize_bilinear_same_size_is_bitwise_copy(rng):
    x = rng.normal(size=(2, 4, 5))
    np.testing.assert_array_equal(ops.resize_bilinear(Tensor(x), 4, 5).numpy(), x)


@pytest.mark.parametrize("size", [(1, 1), (2, 9), (5, 5), (13, 3), (17, 17)])
def test_resize_bilinear_stays_within_input_range(rng, size):
    x = rng.normal(size=(3, 4, 6))
    out = ops.resize_bilinear(Tensor(x), *size).numpy()
    lo, hi = x.min(axis=(1, 2)), x.max(axis=(1, 2))
    assert np.all(out.min(axis=(1, 2)) >= lo - 1e-12)
    assert np.all(out.max(axis=(1, 2)) <= hi + 1e-12)


def test_global_avg_pool_examples():
    np.testing.assert_array_equal(ops.global_avg_pool(Tensor(np.ones((1, 2, 2)))).numpy(), [1.0])
    np.testing.assert_array_equal(ops.global_avg_pool(Tensor(np.array([[[0.0, 2.0], [4.0, 6.0]]]))).numpy(), [3.0])
    two = np.stack([np.full((3, 3), -1.0), np.arange(9.0).reshape(3, 3)])
    np.testing.assert_allclose(ops.global_avg_pool(Tensor(two)).numpy(), [-1.0, 4.0])


def test_linear_examples(rng):
    out = ops.linear(Tensor(np.array([1.0, 2.0])), Tensor(np.array([[3.0, 4.0]])), Tensor(np.array([5.0])))
    assert out.numpy().tolist() == [16.0]
    v = rng.normal(size=4)
    np.testing.assert_array_equal(ops.linear(Tensor(v), Tensor(np.eye(4)), Tensor(np.zeros(4))).numpy(), v)
    b = rng.normal(size=3)
    np.testing.assert_array_equal(ops.linear(Tensor(v), Tensor(np.zeros((3, 4))), Tensor(b)).numpy(), b)
    with pytest.raises(ShapeError):
        ops.linear(Tensor(v), Tensor(np.zeros((3, 5))))


@pytest.mark.parametrize("seed", range(10))
def test_grad_check_conv2d(seed):
    r = np.random.default_rng(seed)
    res = grad_check(
        lambda x, w, b: ops.sum_(ops.mul(ops.conv2d(x, w, b, padding=1), ops.conv2d(x, w, b, padding=1))),
        [r.normal(size=(2, 5, 5)), r.normal(size=(3, 2, 3, 3)), r.normal(size=3)],
    )
    assert res.passed(1e-4), res.per_input


def test_grad_check_detects_wrong_backward():
    from steps.step01_numerics.tensor import record_op

    def bad_square(t: Tensor) -> Tensor:
        return record_op("bad", t.data ** 2, (t,), lambda g: (-2.0 * t.data * g,))

    res = grad_check(lambda x: ops.sum_(bad_square(x)), [np.array([0.5, 1.5])])
    assert not res.passed(1e-4)


def test_param_store_groups_and_freezing():
    store = ParamStore()
    store.add("backbone.block1.weight", np.zeros((2, 3, 3, 3)))
    store.add("cls.l3.split.weight", np.zeros((2, 2, 3, 3)))
    store.add("attention.cls.free", np.zeros(3))
    assert group_of("cls.l3.split.weight") == "cls"
    assert store.groups() == ["attention", "backbone", "cls"]
    store.set_trainable(store.select(["cls"]))
    assert [n for n in store if store[n].requires_grad] == ["cls.l3.split.weight"]


def test_tensor_file_roundtrip_and_header(tmp_path, rng):
    arr = rng.normal(size=(2, 3))
    write_tensor(tmp_path / "a.smt", arr)
    np.testing.assert_array_equal(read_tensor(tmp_path / "a.smt"), arr)
    raw = encode_tensor(arr)
    assert raw[:4] == b"SMT1"
    assert int.from_bytes(raw[4:12], "little") == 2


def test_checkpoint_rejects_corruption(tmp_path):
    buf = encode_checkpoint({"a": np.ones(2), "b": np.zeros((1, 1))})
    assert sorted(decode_checkpoint(buf)) == ["a", "b"]
    with pytest.raises(ContainerFormatError):
        decode_checkpoint(buf[:-3])
    with pytest.raises(ContainerFormatError):
        decode_checkpoint(b"XXXX" + buf[4:])
    with pytest.raises(ContainerFormatError):
        decode_checkpoint(buf + b"\x00")


def test_checkpoint_roundtrip_is_exact(tmp_path, tiny_params):
    path = save_checkpoint(tmp_path / "m.smc", tiny_params.state())
    loaded = load_checkpoint(path)
    assert set(loaded) == set(tiny_params.names())
    for name, arr in loaded.items():
        np.testing.assert_array_equal(arr, tiny_params[name].data)


def test_load_state_strict_reports_missing_names(tiny_params):
    state = tiny_params.state()
    state.pop(next(iter(state)))
    with pytest.raises(KeyError):
        tiny_params.copy().load_state(state)
