"""Reward functions, the expression mini-language, and fitness plumbing."""

import numpy as np
import pytest

from evosearch.errors import ConfigurationError
from evosearch.models import log_density_p0, sample_prior
from evosearch.rewards import (TargetDistribution, circle_reward,
                               compile_expression, expression_reward, fitness,
                               log_target_unnormalized,
                               mixture_logdensity_reward, radial_band_reward,
                               reward)
from evosearch.samplers import NfeLedger


class TestCircleReward:
    def test_values(self):
        fn = circle_reward(radius=2.0)
        x = np.array([[2.0, 0.0], [0.0, 0.0], [1.0, 2.0]])
        np.testing.assert_allclose(fn(x), [0.0, -4.0, -1.0])

    def test_maximum_on_circle(self):
        fn = circle_reward(radius=2.0)
        theta = np.linspace(0, 2 * np.pi, 32, endpoint=False)
        on_circle = 2.0 * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        np.testing.assert_allclose(fn(on_circle), 0.0, atol=1e-12)
        assert np.all(fn(on_circle * 1.1) < 0)

    def test_single_sample_promotion(self):
        fn = circle_reward(radius=1.0)
        out = fn(np.array([1.0, 0.0]))
        assert out.shape == (1,)
        assert out[0] == pytest.approx(0.0)


class TestRadialBandReward:
    def test_flat_top_and_linear_falloff(self):
        fn = radial_band_reward(center=[1.0, 0.0], radius=2.0, width=0.25)
        x = np.array([[3.0, 0.0],    # rho = 2, center of band
                      [3.2, 0.0],    # rho = 2.2, still inside
                      [4.0, 0.0],    # rho = 3, 0.75 beyond the band edge
                      [1.0, 0.0]])   # rho = 0, 1.75 beyond
        np.testing.assert_allclose(fn(x), [0.0, 0.0, -0.75, -1.75])


class TestMixtureLogdensityReward:
    def test_matches_model_density(self, two_modes):
        fn = mixture_logdensity_reward(two_modes)
        x = np.random.default_rng(0).normal(size=(16, 2))
        np.testing.assert_allclose(fn(x), log_density_p0(two_modes, x))


class TestExpressionLanguage:
    def test_arithmetic_and_aliases(self):
        fn = compile_expression("-abs(x**2 + y**2 - 4)")
        ref = circle_reward(radius=2.0)
        x = np.random.default_rng(1).normal(size=(20, 2)) * 2
        np.testing.assert_allclose(fn(x), ref(x))

    def test_indexed_coordinates_and_constants(self):
        fn = compile_expression("sin(pi * x0) + cos(x1) / e")
        x = np.array([[0.5, 0.0]])
        assert fn(x)[0] == pytest.approx(np.sin(np.pi * 0.5) + 1.0 / np.e)

    def test_constant_expression_broadcasts(self):
        fn = compile_expression("1 + 2 * 3")
        out = fn(np.zeros((5, 2)))
        np.testing.assert_array_equal(out, np.full(5, 7.0))

    @pytest.mark.parametrize("text", [
        "__import__('os')",
        "x.real",
        "x[0]",
        "x < 1",
        "lambda x: x",
        "min(x, y)",
        "'abc'",
        "x2 if x else y",
        "foo + 1",
        "abs(x, y)",
        "(",
    ])
    def test_rejects_disallowed_syntax(self, text):
        with pytest.raises(ConfigurationError):
            compile_expression(text)

    def test_out_of_range_coordinate(self):
        fn = compile_expression("x5")
        with pytest.raises(ConfigurationError):
            fn(np.zeros((3, 2)))

    def test_expression_reward_factory(self):
        fn = expression_reward("x + y")
        assert fn.kind == "custom_expression"
        assert fn(np.array([[1.0, 2.0]]))[0] == pytest.approx(3.0)


class TestRewardAccounting:
    def test_reward_calls_counted(self):
        fn = circle_reward()
        ledger = NfeLedger()
        reward(fn, np.zeros((6, 2)), ledger)
        reward(fn, np.zeros((4, 2)), ledger)
        assert ledger.reward_calls == 10
        assert ledger.model_calls == 0

    def test_fitness_rollout(self, two_modes, diffusion):
        fn = circle_reward()
        ledger = NfeLedger()
        rng = np.random.default_rng(3)
        x = rng.standard_normal((8, 2))
        rewards, x0 = fitness(x, 50, two_modes, diffusion, fn, rng, ledger)
        assert rewards.shape == (8,)
        assert x0.shape == (8, 2)
        np.testing.assert_allclose(rewards, fn(x0))
        assert ledger.model_calls == 8 * 50
        assert ledger.reward_calls == 8

    def test_fitness_concentrates_near_prior(self, ring, diffusion):
        # denoised batches should score like prior samples, not like noise
        rng = np.random.default_rng(4)
        fn = mixture_logdensity_reward(ring)
        rewards, x0 = fitness(rng.standard_normal((2000, 2)), 50, ring,
                              diffusion, fn, rng)
        prior_scores = fn(sample_prior(ring, 2000, np.random.default_rng(5)))
        assert abs(rewards.mean() - prior_scores.mean()) < 0.25


class TestTargetDistribution:
    def test_log_target_combines_terms(self, two_modes):
        td = TargetDistribution(base=two_modes, reward=circle_reward(), alpha=0.5)
        x = np.random.default_rng(6).normal(size=(10, 2))
        expected = log_density_p0(two_modes, x) + circle_reward()(x) / 0.5
        np.testing.assert_allclose(log_target_unnormalized(td, x), expected)

    def test_alpha_positive(self, two_modes):
        with pytest.raises(ConfigurationError):
            TargetDistribution(base=two_modes, reward=circle_reward(), alpha=0.0)
