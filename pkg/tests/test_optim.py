"""Adam updates, clipping, decay, warm-up, and the non-finite skip guard."""

import logging

import numpy as np
import pytest

from cifkd import autodiff as ad
from cifkd.optim import Adam, OptimConfig


def param(values):
    return ad.tensor(np.asarray(values, dtype=np.float64),
                     requires_grad=True, dtype=np.float64)


def with_grad(p, g):
    p.grad = np.asarray(g, dtype=np.float64)
    return p


class TestAdamStep:
    def test_zero_grad_zero_decay_leaves_params(self):
        p = with_grad(param([1.0, -2.0]), [0.0, 0.0])
        Adam([p], OptimConfig(weight_decay=0.0)).step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_delta_is_minus_lr(self):
        # Bias correction makes m-hat = g and v-hat = g*g at t=1, so the
        # update is -lr * g/(|g| + eps) = -lr for unit gradient.
        p = with_grad(param([0.0]), [1.0])
        Adam([p], OptimConfig(lr=0.1, weight_decay=0.0)).step()
        assert p.data[0] == pytest.approx(-0.1, rel=1e-6)

    def test_two_tensors_have_independent_state(self):
        a = with_grad(param([0.0]), [1.0])
        b = with_grad(param([0.0]), [-1.0])
        adam = Adam([a, b], OptimConfig(lr=0.1, weight_decay=0.0))
        adam.step()
        assert a.data[0] == pytest.approx(-0.1, rel=1e-6)
        assert b.data[0] == pytest.approx(0.1, rel=1e-6)

    def test_two_steps_match_hand_formula(self):
        cfg = OptimConfig(lr=0.1, beta1=0.9, beta2=0.98, eps=1e-9,
                          weight_decay=0.0, clip_norm=100.0)
        p = with_grad(param([0.0]), [1.0])
        adam = Adam([p], cfg)
        adam.step()
        x1 = p.data[0]
        with_grad(p, [2.0])
        adam.step()
        m2 = 0.9 * 0.1 + 0.1 * 2.0
        v2 = 0.98 * 0.02 + 0.02 * 4.0
        mhat = m2 / (1 - 0.9 ** 2)
        vhat = v2 / (1 - 0.98 ** 2)
        expect = x1 - 0.1 * mhat / (np.sqrt(vhat) + 1e-9)
        assert p.data[0] == pytest.approx(expect, rel=1e-12)

    def test_decoupled_decay_shrinks_without_gradient(self):
        p = with_grad(param([2.0]), [0.0])
        Adam([p], OptimConfig(lr=0.1, weight_decay=0.5)).step()
        # Zero gradient keeps both moments at zero, so only decay acts.
        assert p.data[0] == pytest.approx(2.0 * (1 - 0.1 * 0.5))

    def test_decay_applies_before_adam_delta(self):
        cfg = OptimConfig(lr=0.1, weight_decay=0.5, clip_norm=100.0)
        p = with_grad(param([2.0]), [1.0])
        Adam([p], cfg).step()
        expect = 2.0 * (1 - 0.1 * 0.5) - 0.1 * 1.0 / (1.0 + 1e-9)
        assert p.data[0] == pytest.approx(expect, rel=1e-9)


class TestClipping:
    def test_global_norm_measured_across_tensors(self):
        a = with_grad(param([0.0]), [3.0])
        b = with_grad(param([0.0]), [4.0])
        assert Adam([a, b], OptimConfig()).global_grad_norm() == pytest.approx(5.0)

    def test_large_gradients_clipped_jointly(self):
        cfg = OptimConfig(lr=0.1, weight_decay=0.0, clip_norm=5.0)
        a = with_grad(param([0.0]), [6.0])
        b = with_grad(param([0.0]), [8.0])
        adam = Adam([a, b], cfg)
        adam.step()
        # Norm 10 scaled to 5: effective grads 3 and 4; sign preserved,
        # first-step magnitude still ~lr because Adam normalizes by |g|.
        np.testing.assert_allclose(adam._m[0], [0.3], rtol=1e-12)
        np.testing.assert_allclose(adam._m[1], [0.4], rtol=1e-12)

    def test_small_gradients_untouched(self):
        cfg = OptimConfig(lr=0.1, weight_decay=0.0, clip_norm=5.0)
        a = with_grad(param([0.0]), [3.0])
        adam = Adam([a], cfg)
        adam.step()
        np.testing.assert_allclose(adam._m[0], [0.3], rtol=1e-12)


class TestSkipAndWarmup:
    def test_non_finite_gradient_skips_step(self, caplog):
        p = with_grad(param([1.0]), [np.nan])
        adam = Adam([p], OptimConfig())
        with caplog.at_level(logging.WARNING):
            assert adam.step() is False
        assert p.data[0] == 1.0
        assert adam.step_count == 0
        assert adam.skipped == 1
        assert "non-finite" in caplog.text

    def test_skipped_step_leaves_moments(self):
        p = with_grad(param([1.0]), [1.0])
        adam = Adam([p], OptimConfig(weight_decay=0.0))
        adam.step()
        m_before = adam._m[0].copy()
        with_grad(p, [np.inf])
        adam.step()
        np.testing.assert_array_equal(adam._m[0], m_before)

    def test_missing_grad_treated_as_zero(self):
        p = param([1.0])
        p.grad = None
        adam = Adam([p], OptimConfig(weight_decay=0.0))
        assert adam.step() is True
        assert p.data[0] == 1.0

    def test_linear_warmup_scales_first_steps(self):
        cfg = OptimConfig(lr=0.1, weight_decay=0.0, warmup_steps=10)
        p = with_grad(param([0.0]), [1.0])
        Adam([p], cfg).step()
        assert p.data[0] == pytest.approx(-0.01, rel=1e-6)


class TestConfigValidation:
    def test_bad_lr(self):
        with pytest.raises(ValueError, match="lr"):
            OptimConfig(lr=0.0)

    def test_bad_beta(self):
        with pytest.raises(ValueError, match="betas"):
            OptimConfig(beta2=1.0)

    def test_bad_clip(self):
        with pytest.raises(ValueError, match="clip_norm"):
            OptimConfig(clip_norm=0.0)

    def test_bad_epochs(self):
        with pytest.raises(ValueError, match="at least 1"):
            OptimConfig(epochs=0)
