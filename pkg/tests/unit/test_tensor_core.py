"""
Tests for the tensor engine: graph recording, reverse-mode sweeps and the convolution ops
"""

import numpy as np
import pytest

from src.core import functional as F
from src.core.errors import GradientError, ShapeError
from src.core.layers import BatchNorm, Linear
from src.core.tensor import ComputationRecord, Tensor, backward, get_default_dtype, no_grad, precision


class TestBackward:
    def test_shared_input_accumulates(self):
        x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True, name="x")
        y = F.sum(F.add(F.mul(x, x), x))
        grads = backward(y, {"x": x})
        np.testing.assert_allclose(grads["x"], 2 * x.data + 1)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(GradientError):
            backward(F.mul(x, 2.0))

    def test_unused_parameter_gets_zeros(self):
        x = Tensor(np.ones(3), requires_grad=True)
        unused = Tensor(np.ones((2, 2)), requires_grad=True)
        grads = backward(F.sum(x), {"x": x, "unused": unused})
        np.testing.assert_array_equal(grads["unused"], np.zeros((2, 2)))

    def test_leaf_grad_accumulates_over_calls(self):
        x = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        backward(F.sum(F.mul(x, 3.0)))
        backward(F.sum(F.mul(x, 3.0)))
        np.testing.assert_allclose(x.grad, [6.0, 6.0])

    def test_default_names_leaves(self):
        w = Tensor(np.ones(2), requires_grad=True, name="w")
        grads = backward(F.sum(w))
        assert list(grads) == ["w"]

    def test_linear_gradients_match_closed_form(self, rng):
        x = rng.standard_normal((5, 3))
        w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        b = Tensor(rng.standard_normal(2), requires_grad=True)
        grads = backward(F.sum(F.linear(Tensor(x), w, b)), {"w": w, "b": b})
        np.testing.assert_allclose(grads["w"], x.T @ np.ones((5, 2)))
        np.testing.assert_allclose(grads["b"], [5.0, 5.0])


class TestComputationRecord:
    def test_records_each_operation_once(self):
        x = Tensor(np.ones(4), requires_grad=True)
        y = F.mul(x, 2.0)
        z = F.sum(F.add(y, y))
        record = ComputationRecord(z)
        assert [e.kind for e in record.entries] == ["Mul", "Add", "Sum"]
        assert record.entries[-1].output_id == id(z)

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(4), requires_grad=True)
        with no_grad():
            y = F.sum(F.mul(x, 2.0))
        assert y.node is None
        assert len(ComputationRecord(y)) == 0


class TestPrecision:
    def test_precision_scopes_default_dtype(self):
        before = get_default_dtype()
        with precision(np.float64):
            assert Tensor([1.0, 2.0]).dtype == np.float64
            assert Linear(2, 2, np.random.default_rng(0)).weight.dtype == np.float64
        assert get_default_dtype() == before


class TestConvolutions:
    def test_identity_depthwise_kernel(self, rng):
        x = rng.standard_normal((2, 5, 4, 3))
        kernel = np.zeros((3, 3, 3))
        kernel[1, 1, :] = 1.0
        out = F.depthwise_conv2d(Tensor(x), Tensor(kernel))
        np.testing.assert_allclose(out.data, x)

    def test_identity_dense_kernel(self, rng):
        x = rng.standard_normal((1, 4, 4, 2))
        kernel = np.zeros((3, 3, 2, 2))
        kernel[1, 1] = np.eye(2)
        np.testing.assert_allclose(F.conv2d(Tensor(x), Tensor(kernel)).data, x)

    def test_depthwise_matches_loop(self, rng):
        x = rng.standard_normal((1, 6, 5, 2))
        kernel = rng.standard_normal((3, 3, 2))
        out = F.depthwise_conv2d(Tensor(x), Tensor(kernel), stride=2).data
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        assert out.shape == (1, 3, 3, 2)
        for i in range(3):
            for j in range(3):
                window = padded[0, 2 * i:2 * i + 3, 2 * j:2 * j + 3, :]
                np.testing.assert_allclose(out[0, i, j], np.sum(window * kernel, axis=(0, 1)), rtol=1e-10)

    def test_unbatched_input_keeps_rank(self, rng):
        out = F.depthwise_conv2d(Tensor(rng.standard_normal((5, 4, 3))), Tensor(rng.standard_normal((3, 3, 3))))
        assert out.shape == (5, 4, 3)

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ShapeError):
            F.depthwise_conv2d(Tensor(np.ones((1, 4, 4, 2))), Tensor(np.ones((2, 2, 2))))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            F.depthwise_conv2d(Tensor(np.ones((1, 4, 4, 2))), Tensor(np.ones((3, 3, 3))))

    def test_separable_conv1d_frames(self, rng):
        signal = rng.standard_normal(64)
        depthwise = rng.standard_normal((16, 3))
        pointwise = rng.standard_normal((3, 2))
        out = F.depthwise_separable_conv1d(Tensor(signal), Tensor(depthwise), Tensor(pointwise), stride=8)
        padded = np.pad(signal, 8, mode="reflect")
        assert out.shape == (9, 2)
        for t in range(9):
            frame = padded[8 * t:8 * t + 16]
            np.testing.assert_allclose(out.data[t], (frame @ depthwise) @ pointwise, rtol=1e-10)

    def test_linear_shape_mismatch(self):
        with pytest.raises(ShapeError):
            F.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


class TestOpProperties:
    def test_separable_conv2d_is_linear_without_bias(self, rng):
        for _ in range(20):
            depthwise = Tensor(rng.standard_normal((3, 3, 2)))
            pointwise = Tensor(rng.standard_normal((2, 3)))
            x, y = rng.standard_normal((2, 1, 5, 4, 2))
            a, b = rng.uniform(-3, 3, size=2)

            def conv(v):
                return F.depthwise_separable_conv2d(Tensor(v), depthwise, pointwise).data

            np.testing.assert_allclose(conv(a * x + b * y), a * conv(x) + b * conv(y), rtol=1e-9, atol=1e-9)

    def test_separable_conv1d_is_linear_without_bias(self, rng):
        for _ in range(20):
            depthwise = Tensor(rng.standard_normal((16, 3)))
            pointwise = Tensor(rng.standard_normal((3, 4)))
            x, y = rng.standard_normal((2, 2, 96))
            a, b = rng.uniform(-3, 3, size=2)

            def conv(v):
                return F.depthwise_separable_conv1d(Tensor(v), depthwise, pointwise, stride=8).data

            np.testing.assert_allclose(conv(a * x + b * y), a * conv(x) + b * conv(y), rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("scale", [1e-6, 1.0, 1e3])
    def test_outputs_stay_finite(self, rng, scale):
        for _ in range(10):
            x = Tensor(scale * rng.standard_normal((2, 4, 3, 5)))
            gamma, beta = Tensor(np.ones(5)), Tensor(np.zeros(5))
            outputs = [
                F.sigmoid(x),
                F.relu(x),
                F.prelu(x, Tensor(np.full(5, 0.25))),
                F.log_softmax(x),
                F.l2_normalize(x),
                F.cos(x),
                F.safe_arccos(x),
                F.batch_norm(x, gamma, beta),
                F.depthwise_conv2d(x, Tensor(rng.standard_normal((3, 3, 5)))),
                F.global_depthwise_conv(x, Tensor(rng.standard_normal((4, 3, 5)))),
                F.global_avg_pool(x),
                F.depthwise_separable_conv1d(Tensor(scale * rng.standard_normal(64)),
                                             Tensor(rng.standard_normal((8, 2))), Tensor(rng.standard_normal((2, 3))),
                                             stride=4),
            ]
            for out in outputs:
                assert np.all(np.isfinite(out.data))

    def test_sigmoid_stays_in_unit_interval(self, rng):
        out = F.sigmoid(Tensor(50.0 * rng.standard_normal(1000))).data
        assert np.all((out >= 0.0) & (out <= 1.0))

    def test_batch_norm_of_constant_input_is_finite(self):
        out = F.batch_norm(Tensor(np.full((4, 3), 7.0)), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)


class TestBatchNorm:
    def test_training_normalizes_and_updates_running_stats(self, rng):
        bn = BatchNorm(2)
        x = rng.standard_normal((8, 3, 2)) * 4.0 + 1.0
        out = bn(Tensor(x)).data
        np.testing.assert_allclose(out.mean(axis=(0, 1)), 0.0, atol=1e-5)
        assert not np.allclose(bn.buffer("running_mean"), 0.0)

    def test_eval_uses_running_stats(self, rng):
        bn = BatchNorm(2).eval()
        x = rng.standard_normal((4, 2)).astype(np.float32)
        np.testing.assert_allclose(bn(Tensor(x)).data, x / np.sqrt(1.0 + 1e-5), rtol=1e-5)
