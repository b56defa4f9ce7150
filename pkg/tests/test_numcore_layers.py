import numpy as np
import pytest

from canyonguard.errors import ConfigurationError
from canyonguard.numcore import (LayerSpec, Rng, conv2d_backward, conv2d_forward,
                                 dense_backward, dense_forward)

from conftest import assert_grads_close, finite_difference, random_array


def conv2d_loops(x, spec, weights, bias):
    """Independent six-nested-loop cross-correlation reference."""
    c_out, c_in, k, _ = weights.shape
    _, h, w = x.shape
    p, s = spec.padding, spec.stride
    xp = np.zeros((c_in, h + 2 * p, w + 2 * p), dtype=np.float64)
    xp[:, p:p + h, p:p + w] = x
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    out = np.zeros((c_out, ho, wo), dtype=np.float64)
    for co in range(c_out):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for ci in range(c_in):
                    for ki in range(k):
                        for kj in range(k):
                            acc += weights[co, ci, ki, kj] * xp[ci, i * s + ki, j * s + kj]
                out[co, i, j] = acc + bias[co]
    return out


class TestConvForward:
    def test_zero_input_zero_bias(self, rng):
        spec = LayerSpec.conv2d(1, 2, 3, stride=1, padding=1)
        w, rng = random_array(rng, (2, 1, 3, 3))
        out = conv2d_forward(np.zeros((1, 3, 3)), spec, w, np.zeros(2))
        assert np.all(out == 0.0)

    def test_scalar_identity_scale(self):
        spec = LayerSpec.conv2d(1, 1, 1)
        out = conv2d_forward(np.array([[[2.0]]]), spec,
                             np.array([[[[3.0]]]]), np.array([0.5]))
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == pytest.approx(6.5)

    def test_matches_loop_oracle(self, rng):
        spec = LayerSpec.conv2d(2, 3, 3, stride=1, padding=1)
        x, rng = random_array(rng, (2, 8, 8))
        w, rng = random_array(rng, (3, 2, 3, 3))
        b, rng = random_array(rng, (3,))
        got = conv2d_forward(x, spec, w, b)
        want = conv2d_loops(x, spec, w, b)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_strided_matches_loop_oracle(self, rng):
        spec = LayerSpec.conv2d(2, 4, 3, stride=2, padding=1)
        x, rng = random_array(rng, (2, 9, 7))
        w, rng = random_array(rng, (4, 2, 3, 3))
        b, rng = random_array(rng, (4,))
        np.testing.assert_allclose(conv2d_forward(x, spec, w, b),
                                   conv2d_loops(x, spec, w, b), atol=1e-12)

    def test_channel_mismatch_raises(self, rng):
        spec = LayerSpec.conv2d(3, 2, 3)
        w, rng = random_array(rng, (2, 3, 3, 3))
        with pytest.raises(ConfigurationError, match="channel"):
            conv2d_forward(np.zeros((2, 5, 5)), spec, w, np.zeros(2))

    def test_output_size_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            LayerSpec.conv2d(1, 1, 5).conv_output_hw(3, 3)


class TestConvBackward:
    def test_zero_upstream(self, rng):
        spec = LayerSpec.conv2d(1, 2, 3, padding=1)
        x, rng = random_array(rng, (1, 4, 4))
        w, rng = random_array(rng, (2, 1, 3, 3))
        gx, gw, gb = conv2d_backward(x, spec, w, np.zeros((2, 4, 4)))
        assert np.all(gx == 0) and np.all(gw == 0) and np.all(gb == 0)

    def test_scalar_weight_grad_is_input(self):
        spec = LayerSpec.conv2d(1, 1, 1)
        x = np.array([[[2.0]]])
        w = np.array([[[[3.0]]]])
        gx, gw, gb = conv2d_backward(x, spec, w, np.ones((1, 1, 1)))
        assert gw[0, 0, 0, 0] == pytest.approx(2.0)
        assert gx[0, 0, 0] == pytest.approx(3.0)
        assert gb[0] == pytest.approx(1.0)

    def test_matches_finite_differences(self, rng):
        spec = LayerSpec.conv2d(2, 3, 3, stride=2, padding=1)
        x, rng = random_array(rng, (2, 6, 5))
        w, rng = random_array(rng, (3, 2, 3, 3))
        b, rng = random_array(rng, (3,))
        up, rng = random_array(rng, (3, 3, 3))

        gx, gw, gb = conv2d_backward(x, spec, w, up)

        def loss_of_x(xv):
            return float(np.sum(conv2d_forward(xv, spec, w, b) * up))

        def loss_of_w(wv):
            return float(np.sum(conv2d_forward(x, spec, wv, b) * up))

        def loss_of_b(bv):
            return float(np.sum(conv2d_forward(x, spec, w, bv) * up))

        assert_grads_close(gx, finite_difference(loss_of_x, x), label="conv input")
        assert_grads_close(gw, finite_difference(loss_of_w, w), label="conv weights")
        assert_grads_close(gb, finite_difference(loss_of_b, b), label="conv bias")


class TestDense:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        out = dense_forward(x, np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(out, x)

    def test_single_row_hand_case(self):
        out = dense_forward(np.array([3.0, 4.0]), np.array([[1.0, 2.0]]),
                            np.array([1.0]))
        assert out[0] == pytest.approx(12.0)

    def test_backward_matches_finite_differences(self, rng):
        x, rng = random_array(rng, (8,))
        w, rng = random_array(rng, (4, 8))
        b, rng = random_array(rng, (4,))
        up, rng = random_array(rng, (4,))
        gx, gw, gb = dense_backward(x, w, up)
        assert_grads_close(gx, finite_difference(
            lambda xv: float(np.sum(dense_forward(xv, w, b) * up)), x))
        assert_grads_close(gw, finite_difference(
            lambda wv: float(np.sum(dense_forward(x, wv, b) * up)), w))
        assert_grads_close(gb, finite_difference(
            lambda bv: float(np.sum(dense_forward(x, w, bv) * up)), b))

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            dense_forward(np.zeros(3), np.zeros((2, 4)), np.zeros(2))


class TestPurity:
    def test_conv_is_pure(self, rng):
        spec = LayerSpec.conv2d(1, 1, 3, padding=1)
        x, rng = random_array(rng, (1, 5, 5))
        w, rng = random_array(rng, (1, 1, 3, 3))
        b = np.zeros(1)
        first = conv2d_forward(x, spec, w, b)
        second = conv2d_forward(x, spec, w, b)
        np.testing.assert_array_equal(first, second)
