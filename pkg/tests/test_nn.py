import math

import numpy as np
import pytest

from penlive import nn
from penlive.errors import ShapeMismatch
from penlive.train import TrainConfig

from probes import PROBES


class TestInitWeights:
    def test_zeros(self):
        w = nn.init_weights((3, 4), "zeros", np.random.default_rng(0))
        assert not w.any() and w.shape == (3, 4)

    def test_glorot_bound(self):
        w = nn.init_weights((100, 100), "glorot_uniform", np.random.default_rng(0))
        assert np.abs(w).max() <= math.sqrt(6.0 / 200.0)

    def test_deterministic_per_seed(self):
        a = nn.init_weights((5, 5), "glorot_uniform", np.random.default_rng(42))
        b = nn.init_weights((5, 5), "glorot_uniform", np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_conv_fans(self):
        w = nn.init_weights((8, 3, 3, 3), "glorot_uniform", np.random.default_rng(1))
        assert np.abs(w).max() <= math.sqrt(6.0 / (27 + 72))


class TestDense:
    def test_zero_weights_sigmoid_is_half(self):
        y = nn.dense_apply(np.zeros((4, 1)), np.zeros(1), np.random.default_rng(0).normal(size=(2, 4)),
                           "sigmoid")
        assert np.allclose(y, 0.5)

    def test_identity_passthrough(self):
        x = np.arange(6.0).reshape(2, 3)
        assert np.allclose(nn.dense_apply(np.eye(3), np.zeros(3), x, "none"), x)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            nn.dense_apply(np.zeros((3, 2)), np.zeros(2), np.zeros((1, 4)))


class TestDropout:
    def test_zero_rate_identity(self):
        x = np.ones((3, 3))
        for mode in ("train", "eval"):
            assert np.array_equal(nn.dropout_apply(x, 0.0, mode, np.random.default_rng(0)), x)

    def test_eval_identity(self):
        x = np.random.default_rng(0).normal(size=(5, 5))
        assert np.array_equal(nn.dropout_apply(x, 0.25, "eval"), x)

    def test_inverted_scaling_preserves_expectation(self):
        rng = np.random.default_rng(0)
        y = nn.dropout_apply(np.ones(100_000), 0.25, "train", rng)
        assert abs(y.mean() - 1.0) < 0.01
        surviving = y[y > 0]
        assert np.allclose(surviving, 1.0 / 0.75)


class TestBce:
    def test_half_prediction(self):
        loss, _ = nn.bce_loss(0.5, 1.0)
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_perfect_prediction_clipped(self):
        for p, y in ((1.0, 1.0), (0.0, 0.0)):
            loss, grad = nn.bce_loss(p, y)
            assert loss <= 1e-6 and grad == 0.0

    def test_gradient_matches_finite_differences(self):
        p, y, eps = 0.3, 1.0, 1e-7
        _, grad = nn.bce_loss(p, y)
        num = (nn.bce_loss(p + eps, y)[0] - nn.bce_loss(p - eps, y)[0]) / (2 * eps)
        assert grad == pytest.approx(num, rel=1e-6)


class TestAdam:
    CFG = TrainConfig()

    def test_first_step_magnitude(self):
        p = np.zeros(3)
        state = nn.OptimizerState.zeros_like(p)
        p2, state2 = nn.adam_update(p, np.ones(3), state, self.CFG)
        assert np.allclose(p2, -self.CFG.learning_rate / (1.0 + self.CFG.adam_epsilon))
        assert state2.t == 1

    def test_zero_gradient_zero_moments_no_move(self):
        p = np.full(4, 2.5)
        p2, _ = nn.adam_update(p, np.zeros(4), nn.OptimizerState.zeros_like(p), self.CFG)
        assert np.array_equal(p2, p)

    def test_pure_function_of_state(self):
        rng = np.random.default_rng(0)
        p, g = rng.normal(size=5), rng.normal(size=5)
        st = nn.OptimizerState(m=rng.normal(size=5), v=rng.random(5), t=3)
        a = nn.adam_update(p, g, st, self.CFG)
        b = nn.adam_update(p.copy(), g.copy(),
                           nn.OptimizerState(m=st.m.copy(), v=st.v.copy(), t=3), self.CFG)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1].m, b[1].m)

    def test_step_bounded_by_learning_rate(self):
        rng = np.random.default_rng(1)
        p = np.zeros(64)
        st = nn.OptimizerState.zeros_like(p)
        for _ in range(50):
            g = rng.normal(size=64)
            p2, st = nn.adam_update(p, g, st, self.CFG)
            assert np.all(np.abs(p2 - p) <= self.CFG.learning_rate * (1.0 + 1e-6))
            p = p2

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            nn.adam_update(np.zeros(3), np.zeros(4),
                           nn.OptimizerState.zeros_like(np.zeros(3)), self.CFG)


class TestConvAndGap:
    def test_identity_center_kernel_crops(self):
        rng = np.random.default_rng(0)
        x = rng.random((2, 1, 8, 8))
        f = np.zeros((1, 1, 3, 3))
        f[0, 0, 1, 1] = 1.0
        y, _ = nn.conv2d_forward(x, f, np.zeros(1), "none")
        assert np.allclose(y[:, 0], x[:, 0, 1:-1, 1:-1])

    def test_zero_filters_relu_all_zero(self):
        x = np.random.default_rng(0).random((1, 2, 6, 6))
        y, _ = nn.conv2d_forward(x, np.zeros((4, 2, 3, 3)), np.zeros(4), "relu")
        assert not y.any() and y.shape == (1, 4, 4, 4)

    def test_conv_apply_single_image(self):
        img = np.random.default_rng(0).random((1, 5, 5))
        f = np.zeros((2, 1, 3, 3))
        out = nn.conv_apply(f, np.array([1.0, -1.0]), img, "none")
        assert out.shape == (2, 3, 3)
        assert np.allclose(out[0], 1.0) and np.allclose(out[1], -1.0)

    def test_gap_constant_map(self):
        assert np.allclose(nn.gap_apply(np.full((3, 5, 5), 2.5)), 2.5)

    def test_gap_half_ones(self):
        m = np.zeros((1, 4, 4))
        m[0, :2] = 1.0
        assert np.allclose(nn.gap_apply(m), 0.5)

    def test_gap_gradient_uniform(self):
        _, cache = nn.gap_forward(np.zeros((1, 2, 4, 5)))
        dx = nn.gap_backward(cache, np.ones((1, 2)))
        assert np.allclose(dx, 1.0 / 20.0)


@pytest.mark.parametrize("kind", sorted(PROBES))
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(hash(kind) % 2**32)
    worst = 0.0
    for _ in range(4):
        loss_fn, params = PROBES[kind](rng)
        worst = max(worst, nn.grad_check(loss_fn, params))
    assert worst <= 1e-4, f"{kind}: {worst:.2e}"


def test_dense_only_model_precision():
    rng = np.random.default_rng(5)
    loss_fn, params = PROBES["bce"](rng)
    assert nn.grad_check(loss_fn, params) <= 1e-6
