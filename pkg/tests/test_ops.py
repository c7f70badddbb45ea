import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import numerical_grad, rel_error
from simulearn.errors import ShapeError
from simulearn.ops import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_forward,
    gap_backward,
    gap_forward,
    glorot_uniform_init,
    relu_backward,
    relu_forward,
    softmax,
    softmax_backward,
)


class TestGlorotInit:
    def test_symmetric_fans_give_unit_limit(self):
        rng = np.random.default_rng(0)
        arr = glorot_uniform_init(3, 3, rng)
        assert arr.shape == (3, 3)
        assert np.all(np.abs(arr) <= 1.0)

    def test_limit_closed_form(self):
        rng = np.random.default_rng(1)
        arr = glorot_uniform_init(100, 200, rng)
        limit = 0.1414213562373095
        assert np.max(np.abs(arr)) <= limit
        # uniform over [-L, L] should get close to the bound with 20k draws
        assert np.max(np.abs(arr)) > 0.9 * limit

    def test_deterministic_given_seed(self):
        a = glorot_uniform_init(5, 7, np.random.default_rng(7))
        b = glorot_uniform_init(5, 7, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("fans", [(0, 3), (3, 0), (-1, 2)])
    def test_non_positive_fans_rejected(self, fans):
        with pytest.raises(ValueError):
            glorot_uniform_init(*fans, np.random.default_rng(0))


class TestDense:
    def test_identity_weights(self):
        x = np.array([[1.0, 0.0]])
        out = dense_forward(x, np.eye(2), np.zeros(2))
        np.testing.assert_array_equal(out, x)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 3))
        w = rng.normal(size=(3, 4))
        b = rng.normal(size=4)
        target = rng.normal(size=(2, 4))

        def loss(xx, ww, bb):
            return float(np.sum(dense_forward(xx, ww, bb) * target))

        dx, dw, db = dense_backward(target, x, w)
        assert rel_error(dx, numerical_grad(lambda v: loss(v, w, b), x)) < 1e-6
        assert rel_error(dw, numerical_grad(lambda v: loss(x, v, b), w)) < 1e-6
        assert rel_error(db, numerical_grad(lambda v: loss(x, w, v), b)) < 1e-6

    def test_bias_grad_is_column_sum(self):
        rng = np.random.default_rng(3)
        g = rng.normal(size=(5, 3))
        x = rng.normal(size=(5, 2))
        w = rng.normal(size=(2, 3))
        _, _, db = dense_backward(g, x, w)
        np.testing.assert_allclose(db, g.sum(axis=0))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dense_forward(np.zeros((1, 3)), np.zeros((2, 4)), np.zeros(4))
        with pytest.raises(ShapeError):
            dense_forward(np.zeros((1, 2)), np.zeros((2, 4)), np.zeros(3))


class TestConv2d:
    def test_one_by_one_unit_kernel_is_identity(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(2, 5, 5, 1))
        k = np.ones((1, 1, 1, 1))
        out = conv2d_forward(x, k, np.zeros(1))
        np.testing.assert_allclose(out, x)

    def test_all_ones_kernel_on_constant_image(self):
        c = 0.7
        x = np.full((1, 6, 6, 1), c)
        k = np.ones((3, 3, 1, 1))
        out = conv2d_forward(x, k, np.zeros(1))
        np.testing.assert_allclose(out, 9.0 * c)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_gradients_match_finite_differences(self, stride):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 8, 8, 2))
        k = rng.normal(size=(3, 3, 2, 3))
        b = rng.normal(size=3)
        out = conv2d_forward(x, k, b, stride)
        upstream = rng.normal(size=out.shape)

        def loss(xx, kk, bb):
            return float(np.sum(conv2d_forward(xx, kk, bb, stride) * upstream))

        dx, dk, db = conv2d_backward(upstream, x, k, stride)
        assert rel_error(dx, numerical_grad(lambda v: loss(v, k, b), x)) < 1e-6
        assert rel_error(dk, numerical_grad(lambda v: loss(x, v, b), k)) < 1e-6
        assert rel_error(db, numerical_grad(lambda v: loss(x, k, v), b)) < 1e-6

    def test_kernel_larger_than_input_rejected(self):
        with pytest.raises(ValueError):
            conv2d_forward(np.zeros((1, 2, 2, 1)), np.zeros((3, 3, 1, 1)), np.zeros(1))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            conv2d_forward(np.zeros((1, 4, 4, 2)), np.zeros((3, 3, 1, 1)), np.zeros(1))


class TestGap:
    def test_constant_channel(self):
        x = np.full((1, 3, 4, 2), 0.0)
        x[..., 0] = 2.0
        x[..., 1] = -1.5
        out = gap_forward(x)
        np.testing.assert_allclose(out, [[2.0, -1.5]])

    def test_small_mean(self):
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 2, 2, 1)
        assert gap_forward(x)[0, 0] == pytest.approx(2.5)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3, 3, 4))
        upstream = rng.normal(size=(2, 4))

        def loss(xx):
            return float(np.sum(gap_forward(xx) * upstream))

        dx = gap_backward(upstream, x.shape)
        assert rel_error(dx, numerical_grad(loss, x)) < 1e-6


class TestReluDropout:
    def test_relu_gradient(self):
        rng = np.random.default_rng(7)
        # keep away from the kink at zero
        x = rng.normal(size=(4, 5))
        x[np.abs(x) < 1e-3] = 0.1
        upstream = rng.normal(size=x.shape)
        dx = relu_backward(upstream, x)
        num = numerical_grad(lambda v: float(np.sum(relu_forward(v) * upstream)), x)
        assert rel_error(dx, num) < 1e-6

    def test_dropout_rate_zero_is_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        out, mask = dropout_forward(x, 0.0, np.random.default_rng(0), training=True)
        np.testing.assert_array_equal(out, x)
        np.testing.assert_array_equal(mask, np.ones_like(x))

    def test_survivor_fraction(self):
        rng = np.random.default_rng(8)
        x = np.ones(100_000)
        out, mask = dropout_forward(x, 0.5, rng, training=True)
        assert abs(mask.mean() - 0.5) < 0.01
        # survivors are scaled by 1/(1 - rate)
        assert np.all(out[mask == 1.0] == 2.0)

    def test_inference_mode_mask_all_ones(self):
        x = np.ones((3, 3))
        out, mask = dropout_forward(x, 0.8, None, training=False)
        np.testing.assert_array_equal(out, x)
        np.testing.assert_array_equal(mask, np.ones_like(x))

    @pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
    def test_invalid_rate(self, rate):
        with pytest.raises(ValueError):
            dropout_forward(np.ones(3), rate, np.random.default_rng(0))


class TestSoftmax:
    def test_equal_logits_give_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(4)), np.full(4, 0.25))

    def test_closed_form(self):
        out = softmax(np.array([np.log(2.0), 0.0, 0.0]))
        np.testing.assert_allclose(out, [0.5, 0.25, 0.25], atol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=(3, 5))
        np.testing.assert_allclose(softmax(z), softmax(z + 1000.0), atol=1e-12)

    @given(st.integers(0, 2**31), st.integers(2, 10))
    @settings(max_examples=60, deadline=None)
    def test_rows_on_simplex_and_positive(self, seed, n):
        z = np.random.default_rng(seed).normal(size=(4, n)) * 10
        p = softmax(z)
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(p > 0)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        z = rng.normal(size=(2, 4))
        upstream = rng.normal(size=(2, 4))
        p = softmax(z)
        dz = softmax_backward(upstream, p)
        num = numerical_grad(lambda v: float(np.sum(softmax(v) * upstream)), z)
        assert rel_error(dz, num) < 1e-6
