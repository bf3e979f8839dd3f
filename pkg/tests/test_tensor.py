import numpy as np
import pytest

from tests.conftest import check_gradients, random_arrays
from toolsight.exceptions import FormatError, NumericalError, ShapeError, UsageError
from toolsight.models.models import LrSchedule, TrainConfig
from toolsight.tensor import (
    Adam,
    AdamState,
    ParamGroup,
    Tape,
    Tensor,
    adam_step,
    backward,
    bilinear_upsample,
    concat_channels,
    conv2d,
    crop,
    default_dtype,
    grid_sample_flow,
    no_grad,
    relu,
    softmax_channels,
)
from toolsight.tensor.tsr import decode_tsr, encode_tsr, read_tsr, write_tsr

SEEDS = range(20)


def naive_conv(x, w, b, stride, pad):
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((cout, out_h, out_w))
    for o in range(cout):
        for r in range(out_h):
            for c in range(out_w):
                patch = padded[:, r * stride : r * stride + kh, c * stride : c * stride + kw]
                out[o, r, c] = np.sum(patch * w[o]) + b[o]
    return out


class TestConv2d:
    def test_ones_kernel_sums_neighbourhood(self):
        out = conv2d(Tensor.ones((1, 5, 5)), Tensor.ones((1, 1, 3, 3)), Tensor.zeros((1,)), pad=1)
        assert out.shape == (1, 5, 5)
        assert out.data[0, 2, 2] == 9
        assert out.data[0, 0, 0] == 4

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(2, 6, 7))
        weight = np.zeros((2, 2, 3, 3))
        weight[0, 0, 1, 1] = weight[1, 1, 1, 1] = 1.0
        out = conv2d(Tensor(x), Tensor(weight), Tensor.zeros((2,)), pad=1)
        np.testing.assert_allclose(out.data, x, atol=1e-6)

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_matches_loop_reference(self, rng, stride, pad):
        x = rng.normal(size=(3, 9, 8))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, pad=pad)
        np.testing.assert_allclose(out.data, naive_conv(x, w, b, stride, pad), rtol=1e-4, atol=1e-4)

    def test_one_by_one_kernel(self, rng):
        x = rng.normal(size=(3, 4, 4))
        w = rng.normal(size=(2, 3, 1, 1))
        out = conv2d(Tensor(x), Tensor(w), Tensor.zeros((2,)))
        np.testing.assert_allclose(out.data, np.einsum("oc,chw->ohw", w[:, :, 0, 0], x), rtol=1e-5, atol=1e-5)

    @pytest.mark.parametrize("seed", SEEDS)
    @pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1)])
    def test_gradient(self, seed, stride, pad):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 5, 6))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        weights = rng.normal(size=naive_conv(x, w, b, stride, pad).shape)

        def loss(x, w, b):
            return (conv2d(x, w, b, stride=stride, pad=pad) * Tensor(weights)).sum()

        assert check_gradients(loss, [x, w, b], h=1e-5, rtol=1e-4)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor.ones((2, 5, 5)), Tensor.ones((1, 3, 3, 3)), Tensor.zeros((1,)))

    def test_even_kernel(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor.ones((1, 5, 5)), Tensor.ones((1, 1, 2, 2)), Tensor.zeros((1,)))

    def test_needs_chw_input(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor.ones((5, 5)), Tensor.ones((1, 1, 3, 3)), Tensor.zeros((1,)))


class TestRelu:
    def test_values(self):
        out = relu(Tensor([[[-1.0, 0.0, 2.5]]]))
        np.testing.assert_array_equal(out.data, [[[0.0, 0.0, 2.5]]])

    def test_gradient_is_step_with_zero_at_origin(self):
        x = Tensor([[[-1.0, 0.0, 2.5]]], requires_grad=True)
        backward(relu(x).sum())
        np.testing.assert_array_equal(x.grad, [[[0.0, 0.0, 1.0]]])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(2, 4, 5))
        weights = Tensor(rng.normal(size=(2, 4, 5)))

        def near_kink(index, coord):
            return abs(values[coord]) < 1e-3

        assert check_gradients(lambda x: (relu(x) * weights).sum(), [values], h=1e-5, skip=near_kink)


class TestSoftmax:
    def test_uniform_logits(self):
        out = softmax_channels(Tensor.zeros((11, 2, 3)))
        np.testing.assert_allclose(out.data, 1 / 11, rtol=1e-6)

    def test_large_logits_are_stable(self):
        out = softmax_channels(Tensor(np.array([1000.0, 0.0]).reshape(2, 1, 1)))
        np.testing.assert_allclose(out.data.ravel(), [1.0, 0.0], atol=1e-6)

    def test_channels_sum_to_one(self, rng):
        out = softmax_channels(Tensor(rng.normal(scale=1e4, size=(5, 4, 4))))
        assert np.all(out.data >= 0)
        np.testing.assert_allclose(out.data.sum(axis=0), 1.0, atol=1e-5)

    def test_single_channel_rejected(self):
        with pytest.raises(ShapeError):
            softmax_channels(Tensor.zeros((1, 2, 2)))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        weights = Tensor(rng.normal(size=(4, 3, 3)))
        assert check_gradients(lambda x: (softmax_channels(x) * weights).sum(), [rng.normal(size=(4, 3, 3))], h=1e-5)


class TestBilinearUpsample:
    def test_factor_one_is_identity(self, rng):
        x = rng.normal(size=(2, 3, 4))
        np.testing.assert_allclose(bilinear_upsample(Tensor(x), 1).data, x, rtol=1e-6)

    def test_constant_stays_constant(self):
        out = bilinear_upsample(Tensor(np.full((1, 3, 5), 7.0)), 4)
        assert out.shape == (1, 12, 20)
        np.testing.assert_allclose(out.data, 7.0, rtol=1e-6)

    def test_two_by_two_doubling(self):
        out = bilinear_upsample(Tensor([[[1.0, 2.0], [3.0, 4.0]]]), 2)
        pos = np.array([0.0, 0.25, 0.75, 1.0])
        expected = 1 + pos[None, :] + 2 * pos[:, None]
        np.testing.assert_allclose(out.data[0], expected, rtol=1e-6)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        weights = Tensor(rng.normal(size=(2, 6, 9)))
        assert check_gradients(lambda x: (bilinear_upsample(x, 3) * weights).sum(), [rng.normal(size=(2, 2, 3))], h=1e-5)


class TestGridSampleFlow:
    def test_zero_flow_is_identity(self, rng):
        x = rng.normal(size=(3, 5, 6))
        out = grid_sample_flow(Tensor(x), np.zeros((2, 5, 6)))
        np.testing.assert_allclose(out.data, x, rtol=1e-6)

    def test_unit_shift_clamps_at_border(self):
        x = Tensor([[[0.0, 1.0, 2.0, 3.0]]])
        flow = np.zeros((2, 1, 4))
        flow[0] = 1.0
        np.testing.assert_allclose(grid_sample_flow(x, flow).data[0, 0], [1.0, 2.0, 3.0, 3.0])

    def test_fractional_shift_interpolates(self):
        x = Tensor([[[0.0, 1.0, 2.0, 3.0]]])
        flow = np.zeros((2, 1, 4))
        flow[0] = 0.5
        np.testing.assert_allclose(grid_sample_flow(x, flow).data[0, 0], [0.5, 1.5, 2.5, 3.0])

    def test_flow_shape_must_match(self):
        with pytest.raises(ShapeError):
            grid_sample_flow(Tensor.zeros((1, 4, 4)), np.zeros((2, 4, 5)))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        flow = rng.uniform(-1.7, 1.7, size=(2, 4, 5))
        weights = Tensor(rng.normal(size=(2, 4, 5)))
        assert check_gradients(lambda x: (grid_sample_flow(x, flow) * weights).sum(), [rng.normal(size=(2, 4, 5))], h=1e-5)


class TestConcatAndCrop:
    def test_concat_gradient_splits(self):
        a = Tensor.ones((1, 2, 2), requires_grad=True)
        b = Tensor.ones((2, 2, 2), requires_grad=True)
        out = concat_channels([a, b])
        backward((out * Tensor(np.arange(12.0).reshape(3, 2, 2))).sum())
        np.testing.assert_array_equal(a.grad, np.arange(4.0).reshape(1, 2, 2))
        np.testing.assert_array_equal(b.grad, np.arange(4.0, 12.0).reshape(2, 2, 2))

    def test_concat_spatial_mismatch(self):
        with pytest.raises(ShapeError):
            concat_channels([Tensor.ones((1, 2, 2)), Tensor.ones((1, 2, 3))])

    def test_crop_gradient(self):
        x = Tensor.ones((1, 4, 4), requires_grad=True)
        backward(crop(x, 2, 3).sum())
        assert x.grad.sum() == 6
        assert x.grad[0, 3, 3] == 0

    @pytest.mark.parametrize("seed", SEEDS)
    def test_random_gradients(self, seed):
        rng = np.random.default_rng(seed)
        weights = Tensor(rng.normal(size=(3, 2, 3)))

        def loss(a, b):
            return (crop(concat_channels([a, b]), 2, 3) * weights).sum()

        assert check_gradients(loss, [rng.normal(size=(1, 4, 4)), rng.normal(size=(2, 4, 4))], h=1e-5)


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        backward(x.sum())
        np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))

    def test_square_gradient(self, rng):
        values = rng.normal(size=(2, 3))
        x = Tensor(values, requires_grad=True)
        backward((x * x).sum())
        np.testing.assert_allclose(x.grad, 2 * values.astype(np.float32), rtol=1e-6)

    def test_reused_tensor_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        backward((x * x + x * 3.0).sum())
        np.testing.assert_allclose(x.grad, [7.0])

    def test_non_scalar_loss(self):
        x = Tensor.ones((2, 2), requires_grad=True)
        with pytest.raises(UsageError):
            backward(x * 2.0)

    def test_tape_is_cleared(self):
        Tape.current().clear()
        x = Tensor.ones((3,), requires_grad=True)
        loss = (x * 2.0).sum()
        assert len(Tape.current()) == 2
        backward(loss)
        assert len(Tape.current()) == 0
        with pytest.raises(UsageError):
            backward(loss)

    def test_failed_backward_clears_tape(self):
        Tape.current().clear()
        x = Tensor([1.0], requires_grad=True)
        loss = (x * 2.0).sum()
        loss.data[...] = np.inf
        with pytest.raises(NumericalError):
            backward(loss)
        assert len(Tape.current()) == 0

    def test_sum_keeps_tensor_dtype(self):
        assert Tensor(np.ones(5)).sum().data.dtype == np.float32
        with default_dtype(np.float64):
            total = Tensor(np.full(3, 0.1)).sum()
        assert total.data.dtype == np.float64
        assert total.item() == pytest.approx(0.3, abs=1e-15)

    def test_no_grad_records_nothing(self):
        Tape.current().clear()
        x = Tensor.ones((3,), requires_grad=True)
        with no_grad():
            loss = (x * 2.0).sum()
        assert len(Tape.current()) == 0
        with pytest.raises(UsageError):
            backward(loss)

    def test_deterministic(self, rng):
        x = rng.normal(size=(2, 6, 6))
        w = rng.normal(size=(3, 2, 3, 3))

        def grads():
            xt, wt = Tensor(x, requires_grad=True), Tensor(w, requires_grad=True)
            backward(softmax_channels(relu(conv2d(xt, wt, Tensor.zeros((3,)), pad=1))).log(1e-6).sum())
            return xt.grad, wt.grad

        first, second = grads(), grads()
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_non_finite_forward(self):
        with pytest.raises(NumericalError):
            Tensor([1.0]) / Tensor([0.0])

    def test_log_of_non_positive(self):
        with pytest.raises(NumericalError):
            Tensor([0.0, 1.0]).log()

    def test_elementwise_shapes_must_agree(self):
        with pytest.raises(ShapeError):
            Tensor.ones((2,)) + Tensor.ones((3,))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        param = Tensor([1.0, -2.0])
        adam_step([param], [np.zeros(2)], AdamState(), lr=0.1)
        np.testing.assert_array_equal(param.data, [1.0, -2.0])

    def test_first_step_moves_by_lr(self):
        param = Tensor([1.0, 1.0])
        adam_step([param], [np.array([0.5, -3.0])], AdamState(), lr=0.1)
        np.testing.assert_allclose(param.data, [0.9, 1.1], rtol=1e-5)

    def test_minimizes_quadratic(self):
        param = Tensor([0.0], requires_grad=True)
        state = AdamState()
        for step in range(1000):
            loss = ((param - 3.0) * (param - 3.0)).sum()
            param.zero_grad()
            backward(loss)
            adam_step([param], [param.grad], state, lr=0.1 if step < 300 else 0.01)
        assert abs(param.data[0] - 3.0) < 1e-2

    def test_zero_grad_drops_abandoned_forward(self):
        param = Tensor([1.0], requires_grad=True)
        optimizer = Adam([ParamGroup("p", [param], LrSchedule(base_lr=0.1))])
        Tape.current().clear()
        abandoned = param * 3.0
        with pytest.raises(NumericalError):
            abandoned / Tensor([0.0])
        assert len(Tape.current()) == 1
        optimizer.zero_grad()
        assert len(Tape.current()) == 0
        backward((param * 2.0).sum())
        np.testing.assert_allclose(param.grad, [2.0])

    def test_gradient_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step([Tensor.zeros((2,))], [np.zeros(3)], AdamState(), lr=0.1)

    @pytest.mark.parametrize("lr", [0.0, -1e-3])
    def test_non_positive_lr(self, lr):
        with pytest.raises(UsageError):
            adam_step([Tensor.zeros((2,))], [np.ones(2)], AdamState(), lr=lr)

    def test_zero_rate_group_is_frozen(self):
        frozen, trained = Tensor([1.0]), Tensor([1.0])
        frozen.grad = np.array([1.0])
        trained.grad = np.array([1.0])
        optimizer = Adam(
            [
                ParamGroup("frozen", [frozen], LrSchedule(base_lr=0.0)),
                ParamGroup("trained", [trained], LrSchedule(base_lr=0.1)),
            ]
        )
        optimizer.step(epoch=0)
        assert frozen.data[0] == 1.0
        assert trained.data[0] == pytest.approx(0.9, rel=1e-5)


class TestLrSchedule:
    def test_decay_at_epoch_ten(self):
        schedule = TrainConfig().schedule(3e-5)
        assert schedule.lr(9) == pytest.approx(3e-5)
        assert schedule.lr(10) == pytest.approx(3e-6)
        assert schedule.lr(19) == pytest.approx(3e-6)


class TestTsr:
    def test_round_trip(self, tmp_path, rng):
        array = rng.normal(size=(3, 4, 5)).astype(np.float32)
        write_tsr(tmp_path / "a.tsr", array)
        np.testing.assert_array_equal(read_tsr(tmp_path / "a.tsr"), array)

    @pytest.mark.parametrize("leading", [(), (3,), (2, 4)])
    def test_round_trip_random_shapes(self, tmp_path, leading):
        path = tmp_path / "a.tsr"
        for array in random_arrays(100, leading=leading, seed=len(leading)):
            write_tsr(path, array)
            loaded = read_tsr(path)
            assert loaded.shape == array.shape
            np.testing.assert_array_equal(loaded, array)

    def test_blocks_concatenate(self):
        first, second = np.ones((2, 2)), np.zeros(3)
        buffer = encode_tsr(first) + encode_tsr(second)
        a, offset = decode_tsr(buffer)
        b, end = decode_tsr(buffer, offset)
        assert a.shape == (2, 2) and b.shape == (3,)
        assert end == len(buffer)

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            decode_tsr(b"XXXX" + encode_tsr(np.ones(2))[4:])

    def test_truncated_payload(self):
        with pytest.raises(FormatError, match="truncated"):
            decode_tsr(encode_tsr(np.ones((4, 4)))[:-3])
