import numpy as np
import pytest

from pdmm.gradcheck import Composed, run_suite
from pdmm.nn import (
    Conv2D,
    Dense,
    MaxPool2x2,
    ReLU,
    ShapeError,
    grad_check,
    sgd_step,
    softmax_cross_entropy,
)
from pdmm.nn import _kernels_py
from pdmm.nn.backend import _kernels_cy


def make_dense(w, b):
    layer = Dense("d", len(w[0]), len(w), np.random.default_rng(0))
    layer.params["weight"][...] = w
    layer.params["bias"][...] = b
    return layer


class TestDense:
    def test_identity(self):
        layer = make_dense(np.eye(2), np.zeros(2))
        np.testing.assert_array_equal(layer.forward(np.array([3.0, -1.0])), [3.0, -1.0])

    def test_hand_value(self):
        layer = make_dense([[1.0, 2.0], [3.0, 4.0]], [0.5, -0.5])
        np.testing.assert_allclose(layer.forward(np.array([1.0, 1.0])), [3.5, 6.5])

    def test_backward_accumulates(self):
        layer = make_dense([[1.0, 2.0], [3.0, 4.0]], [0.0, 0.0])
        x = np.array([1.0, -2.0])
        layer.forward(x)
        dy = np.array([1.0, 0.5])
        dx = layer.backward(dy)
        np.testing.assert_allclose(dx, layer.params["weight"].T @ dy)
        np.testing.assert_allclose(layer.grads["weight"], np.outer(dy, x))
        np.testing.assert_allclose(layer.grads["bias"], dy)

    def test_shape_mismatch(self):
        layer = make_dense(np.eye(2), np.zeros(2))
        with pytest.raises(ShapeError):
            layer.forward(np.zeros(3))

    def test_grad_check(self):
        rng = np.random.default_rng(1)
        layer = Dense("d", 4, 3, rng)
        assert grad_check(layer, rng.standard_normal(4), rng) < 1e-4


class TestConv:
    def test_one_by_one_identity(self):
        rng = np.random.default_rng(2)
        layer = Conv2D("c", 1, 1, 1, rng)
        layer.params["kernel"][...] = 1.0
        layer.params["bias"][...] = 0.0
        x = rng.standard_normal((1, 4, 4))
        np.testing.assert_allclose(layer.forward(x), x)

    def test_ones_summation(self):
        layer = Conv2D("c", 1, 1, 2, np.random.default_rng(3))
        layer.params["kernel"][...] = 1.0
        layer.params["bias"][...] = 0.0
        out = layer.forward(np.ones((1, 3, 3)))
        np.testing.assert_allclose(out, np.full((1, 2, 2), 4.0))

    def test_output_shape_formula(self):
        layer = Conv2D("c", 1, 2, 3, np.random.default_rng(4))
        assert layer.forward(np.zeros((1, 64, 64))).shape == (2, 62, 62)

    def test_kernel_larger_than_input(self):
        layer = Conv2D("c", 1, 1, 5, np.random.default_rng(5))
        with pytest.raises(ShapeError):
            layer.forward(np.zeros((1, 3, 3)))

    def test_grad_check(self):
        rng = np.random.default_rng(6)
        layer = Conv2D("c", 2, 3, 3, rng)
        assert grad_check(layer, rng.standard_normal((2, 8, 8)), rng) < 1e-4

    def test_strided_shapes_match_bruteforce(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            h = int(rng.integers(3, 12))
            w = int(rng.integers(3, 12))
            k = int(rng.integers(1, min(h, w) + 1))
            s = int(rng.integers(1, 4))
            layer = Conv2D("c", 1, 1, k, rng, stride=s)
            out = layer.forward(rng.standard_normal((1, h, w)))
            # brute-force window enumeration
            rows = len([i for i in range(0, h - k + 1, s)])
            cols = len([j for j in range(0, w - k + 1, s)])
            assert out.shape == (1, rows, cols)
            assert rows == (h - k) // s + 1 and cols == (w - k) // s + 1


class TestMaxPool:
    def test_basic(self):
        layer = MaxPool2x2("p")
        out = layer.forward(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        np.testing.assert_array_equal(out, [[[4.0]]])

    def test_odd_trailing_dropped(self):
        layer = MaxPool2x2("p")
        x = np.arange(9.0).reshape(1, 3, 3)
        out = layer.forward(x)
        # floor rule: only the top-left 2x2 window participates
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == x[0, :2, :2].max()

    def test_backward_routing(self):
        layer = MaxPool2x2("p")
        layer.forward(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        dx = layer.backward(np.array([[[1.0]]]))
        np.testing.assert_array_equal(dx, [[[0.0, 0.0], [0.0, 1.0]]])

    def test_tie_first_occurrence(self):
        layer = MaxPool2x2("p")
        layer.forward(np.full((1, 2, 2), 5.0))
        dx = layer.backward(np.array([[[2.0]]]))
        np.testing.assert_array_equal(dx, [[[2.0, 0.0], [0.0, 0.0]]])

    def test_extent_too_small(self):
        with pytest.raises(ShapeError):
            MaxPool2x2("p").forward(np.zeros((1, 1, 4)))

    def test_matches_bruteforce_windows(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            c = int(rng.integers(1, 4))
            h = int(rng.integers(2, 9))
            w = int(rng.integers(2, 9))
            x = rng.standard_normal((c, h, w))
            out = MaxPool2x2("p").forward(x)
            for ci in range(c):
                for i in range(h // 2):
                    for j in range(w // 2):
                        assert out[ci, i, j] == x[ci, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()


class TestReLU:
    def test_values(self):
        out = ReLU("r").forward(np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0, 2.0])

    def test_positive_identity(self):
        x = np.array([0.5, 3.0])
        np.testing.assert_array_equal(ReLU("r").forward(x), x)

    def test_gradient_at_zero_is_zero(self):
        layer = ReLU("r")
        layer.forward(np.array([0.0]))
        np.testing.assert_array_equal(layer.backward(np.array([7.0])), [0.0])

    def test_grad_check_off_kink(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal(10)
        x = np.where(np.abs(x) < 0.1, 0.5, x)
        assert grad_check(ReLU("r"), x, rng) < 1e-4


class TestSoftmaxCrossEntropy:
    def test_equal_logits(self):
        loss, probs, _ = softmax_cross_entropy(np.zeros(5), 0)
        np.testing.assert_allclose(probs, 0.2)
        assert loss == pytest.approx(np.log(5))

    def test_confident_logits(self):
        loss, _, _ = softmax_cross_entropy(np.array([10.0, 0, 0, 0, 0]), 0)
        assert loss == pytest.approx(np.log(1 + 4 * np.exp(-10)))

    def test_dlogits(self):
        _, _, dlogits = softmax_cross_entropy(np.zeros(5), 2)
        np.testing.assert_allclose(dlogits, [0.2, 0.2, -0.8, 0.2, 0.2])

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros(5), 5)

    def test_huge_logits_stable(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            logits = rng.standard_normal(5) * 1e3
            _, probs, _ = softmax_cross_entropy(logits, 3)
            assert (probs > 0).all()
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)


class TestSgd:
    def one_param_layer(self, value):
        layer = Dense("d", 1, 1, np.random.default_rng(0))
        layer.params["weight"][...] = value
        layer.params["bias"][...] = 0.0
        return layer

    def test_plain_step(self):
        layer = self.one_param_layer(1.0)
        layer.grads["weight"][...] = 0.5
        sgd_step([layer], lr=0.1, momentum=0.0)
        assert layer.params["weight"][0, 0] == pytest.approx(0.95)
        assert layer.grads["weight"][0, 0] == 0.0

    def test_momentum_recursion(self):
        layer = self.one_param_layer(0.0)
        for _ in range(2):
            layer.grads["weight"][...] = 1.0
            sgd_step([layer], lr=0.1, momentum=0.9)
        # v1 = 1, v2 = 1.9 -> p = -0.1 - 0.19
        assert layer.params["weight"][0, 0] == pytest.approx(-0.29)

    def test_zero_gradient_no_change(self):
        layer = self.one_param_layer(2.0)
        sgd_step([layer], lr=0.1, momentum=0.9)
        assert layer.params["weight"][0, 0] == 2.0

    def test_frozen_layer_untouched(self):
        layer = self.one_param_layer(1.0)
        layer.frozen = True
        layer.grads["weight"][...] = 5.0
        sgd_step([layer], lr=0.1, momentum=0.0)
        assert layer.params["weight"][0, 0] == 1.0
        assert layer.grads["weight"][0, 0] == 0.0


class _CorruptedDense(Dense):
    def backward(self, dy):
        dx = super().backward(dy)
        for g in self.grads.values():
            g *= 2.0
        return dx * 2.0


class TestGradCheckHarness:
    def test_suite_below_tolerance(self):
        results = run_suite(seed=3)
        assert len(results) >= 20
        assert max(err for _, err in results) < 1e-4

    def test_detects_corruption(self):
        rng = np.random.default_rng(11)
        layer = _CorruptedDense("bad", 4, 3, rng)
        assert grad_check(layer, rng.standard_normal(4), rng) > 0.3

    def test_composed_stack(self):
        rng = np.random.default_rng(12)
        stack = Composed("s", [Conv2D("c", 1, 2, 3, rng), ReLU("r"), MaxPool2x2("p")])
        assert grad_check(stack, rng.standard_normal((1, 8, 8)), rng) < 1e-4


class TestDeterminism:
    def test_bit_identical_outputs(self):
        outs = []
        for _ in range(2):
            rng = np.random.default_rng(13)
            layer = Conv2D("c", 2, 2, 3, rng)
            outs.append(layer.forward(np.random.default_rng(14).standard_normal((2, 6, 6))))
        np.testing.assert_array_equal(outs[0], outs[1])


class TestToyTraining:
    def test_loss_decreases_first_epochs(self):
        rng = np.random.default_rng(15)
        n = 40
        labels = rng.integers(0, 2, n)
        x = np.column_stack([labels * 2.0 - 1.0 + 0.1 * rng.standard_normal(n),
                             rng.standard_normal(n)])
        layer = Dense("d", 2, 5, np.random.default_rng(16))
        losses = []
        for _epoch in range(5):
            total = 0.0
            for i in range(n):
                logits = layer.forward(x[i])
                loss, _, dlogits = softmax_cross_entropy(logits, int(labels[i]))
                total += loss
                layer.backward(dlogits)
                sgd_step([layer], lr=0.05, momentum=0.0)
            losses.append(total / n)
        assert losses[-1] < losses[0]


@pytest.mark.skipif(_kernels_cy is None, reason="compiled kernels not built")
class TestKernelParity:
    def test_conv_forward_backward(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((3, 10, 10))
        k = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        for stride in (1, 2):
            y_py = _kernels_py.conv2d_forward(x, k, b, stride)
            y_cy = np.asarray(_kernels_cy.conv2d_forward(x, k, b, stride))
            np.testing.assert_allclose(y_py, y_cy, rtol=1e-12, atol=1e-12)
            dy = rng.standard_normal(y_py.shape)
            outs_py = _kernels_py.conv2d_backward(x, k, stride, dy)
            outs_cy = _kernels_cy.conv2d_backward(x, k, stride, np.ascontiguousarray(dy))
            for a, bb in zip(outs_py, outs_cy):
                np.testing.assert_allclose(a, np.asarray(bb), rtol=1e-12, atol=1e-12)

    def test_maxpool(self):
        rng = np.random.default_rng(18)
        x = rng.standard_normal((2, 7, 9))
        y_py, arg_py = _kernels_py.maxpool2_forward(x)
        y_cy, arg_cy = _kernels_cy.maxpool2_forward(x)
        np.testing.assert_array_equal(y_py, np.asarray(y_cy))
        np.testing.assert_array_equal(arg_py, np.asarray(arg_cy))
        dy = rng.standard_normal(y_py.shape)
        dx_py = _kernels_py.maxpool2_backward(x.shape, arg_py, dy)
        dx_cy = _kernels_cy.maxpool2_backward(x.shape, arg_py, np.ascontiguousarray(dy))
        np.testing.assert_array_equal(dx_py, np.asarray(dx_cy))
