import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectpipe import numerics as nm

from conftest import loop_conv2d


class TestConvSpec:
    def test_rejects_even_kernel(self):
        with pytest.raises(nm.ShapeError):
            nm.ConvSpec(4, 4, kernel=2)

    def test_rejects_bad_groups(self):
        with pytest.raises(nm.ShapeError):
            nm.ConvSpec(4, 6, kernel=3, groups=4)

    def test_output_size_formula(self):
        spec = nm.ConvSpec(3, 8, kernel=3, stride=2, padding=1)
        assert spec.out_hw((224, 224)) == (112, 112)
        assert spec.out_hw((7, 7)) == (4, 4)

    def test_dilated_output_size(self):
        spec = nm.ConvSpec(4, 4, kernel=3, stride=1, padding=3, dilation=3)
        assert spec.out_hw((14, 14)) == (14, 14)


class TestConv2d:
    def test_identity_kernel(self, rng):
        x = rng.normal(size=(2, 1, 5, 5))
        spec = nm.ConvSpec(1, 1, kernel=1, bias=False)
        w = np.ones((1, 1, 1, 1))
        np.testing.assert_array_equal(nm.conv2d(x, spec, w), x)

    def test_all_ones_3x3(self):
        x = np.ones((1, 1, 3, 3))
        spec = nm.ConvSpec(1, 1, kernel=3, bias=False)
        y = nm.conv2d(x, spec, np.ones((1, 1, 3, 3)))
        assert y.shape == (1, 1, 1, 1)
        assert y[0, 0, 0, 0] == 9.0

    def test_matches_loop_oracle_strided(self, rng):
        x = rng.normal(size=(1, 2, 5, 5))
        spec = nm.ConvSpec(2, 3, kernel=3, stride=2, padding=1)
        w = rng.normal(size=spec.weight_shape)
        b = rng.normal(size=3)
        np.testing.assert_allclose(nm.conv2d(x, spec, w, b), loop_conv2d(x, spec, w, b), rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("groups,cout", [(2, 4), (4, 4), (4, 8)])
    def test_matches_loop_oracle_grouped(self, rng, groups, cout):
        x = rng.normal(size=(2, 4, 6, 5))
        spec = nm.ConvSpec(4, cout, kernel=3, stride=1, padding=1, groups=groups)
        w = rng.normal(size=spec.weight_shape)
        np.testing.assert_allclose(nm.conv2d(x, spec, w), loop_conv2d(x, spec, w), rtol=1e-12, atol=1e-12)

    def test_matches_loop_oracle_dilated(self, rng):
        x = rng.normal(size=(1, 3, 9, 9))
        spec = nm.ConvSpec(3, 2, kernel=3, stride=1, padding=2, dilation=2)
        w = rng.normal(size=spec.weight_shape)
        np.testing.assert_allclose(nm.conv2d(x, spec, w), loop_conv2d(x, spec, w), rtol=1e-12, atol=1e-12)

    def test_depthwise_equals_per_channel(self, rng):
        x = rng.normal(size=(1, 3, 6, 6))
        spec = nm.ConvSpec(3, 3, kernel=3, padding=1, groups=3)
        w = rng.normal(size=spec.weight_shape)
        y = nm.conv2d(x, spec, w)
        for c in range(3):
            solo = nm.ConvSpec(1, 1, kernel=3, padding=1)
            yc = nm.conv2d(x[:, c : c + 1], solo, w[c : c + 1])
            np.testing.assert_allclose(y[:, c : c + 1], yc, rtol=1e-12)

    def test_linearity(self, rng):
        spec = nm.ConvSpec(2, 3, kernel=3, padding=1)
        w = rng.normal(size=spec.weight_shape)
        x1 = rng.normal(size=(1, 2, 5, 5))
        x2 = rng.normal(size=(1, 2, 5, 5))
        lhs = nm.conv2d(2.5 * x1 - 0.7 * x2, spec, w)
        rhs = 2.5 * nm.conv2d(x1, spec, w) - 0.7 * nm.conv2d(x2, spec, w)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9)

    def test_shape_error_on_bad_weights(self, rng):
        spec = nm.ConvSpec(2, 3, kernel=3)
        with pytest.raises(nm.ShapeError):
            nm.conv2d(rng.normal(size=(1, 2, 5, 5)), spec, np.zeros((3, 2, 5, 5)))

    def test_numeric_error_on_nan(self):
        spec = nm.ConvSpec(1, 1, kernel=1)
        x = np.full((1, 1, 2, 2), np.nan)
        with pytest.raises(nm.NumericError):
            nm.conv2d(x, spec, np.ones((1, 1, 1, 1)))


class TestLinear:
    def test_identity(self, rng):
        x = rng.normal(size=5)
        y = nm.linear(x, np.eye(5), np.zeros(5))
        np.testing.assert_allclose(y, x)

    def test_forced_arithmetic(self):
        assert nm.linear(np.array([2.0, 3.0]), np.array([[1.0, 1.0]]), np.array([0.0])) == np.array([5.0])

    def test_matches_loop_oracle(self, rng):
        x = rng.normal(size=512)
        w = rng.normal(size=(8, 512))
        b = rng.normal(size=8)
        expect = np.array([sum(w[o, i] * x[i] for i in range(512)) + b[o] for o in range(8)])
        np.testing.assert_allclose(nm.linear(x, w, b), expect, rtol=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(nm.ShapeError):
            nm.linear(np.zeros(3), np.zeros((2, 4)))


class TestGlobalAvgPool:
    def test_constant(self):
        x = np.full((2, 3, 4, 4), 2.5)
        np.testing.assert_array_equal(nm.global_avg_pool(x), np.full((2, 3), 2.5))

    def test_mean_1_to_49(self):
        x = np.arange(1.0, 50.0).reshape(1, 1, 7, 7)
        assert nm.global_avg_pool(x)[0, 0] == 25.0

    def test_matches_loop_oracle(self, rng):
        x = rng.normal(size=(1, 512, 7, 7))
        expect = np.array([[x[b, c].sum() / 49.0 for c in range(512)] for b in range(1)])
        np.testing.assert_allclose(nm.global_avg_pool(x), expect, rtol=1e-12)


class TestActivations:
    def test_softmax_uniform(self):
        np.testing.assert_allclose(nm.softmax(np.zeros(8)), np.full(8, 0.125))

    def test_sigmoid_tanh_at_zero(self):
        assert nm.sigmoid(np.array(0.0)) == 0.5
        assert nm.tanh(np.array(0.0)) == 0.0

    def test_softmax_overflow_stability(self):
        y = nm.softmax(np.array([1000.0, 1000.0]))
        np.testing.assert_allclose(y, [0.5, 0.5])
        assert np.all(np.isfinite(y))

    def test_activation_dispatch(self):
        x = np.array([-1.0, 2.0])
        np.testing.assert_array_equal(nm.activation("relu", x), [0.0, 2.0])
        with pytest.raises(ValueError):
            nm.activation("gelu", x)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=16))
    def test_softmax_is_probability_vector(self, logits):
        y = nm.softmax(np.array(logits))
        assert np.all(y >= 0)
        assert abs(y.sum() - 1.0) <= 1e-12
