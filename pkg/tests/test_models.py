"""Analytic mixture quantities checked against independent numerical oracles."""

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from evosearch.errors import ConfigurationError
from evosearch.models import (GaussianMixture, diffused_params, epsilon_pred,
                              flow_params, log_density, log_density_p0,
                              posterior_means, responsibilities, ring_mixture,
                              sample_prior, score, velocity)


def brute_force_log_density(model, x, params):
    """Oracle: sum the component pdfs directly via scipy."""
    dens = np.zeros(x.shape[0])
    for w, m, v in zip(model.weights, params.means, params.variances):
        dens += w * multivariate_normal.pdf(x, mean=m, cov=v * np.eye(x.shape[1]))
    return np.log(dens)


class TestGaussianMixture:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            GaussianMixture(weights=np.array([0.5, 0.6]),
                            means=np.zeros((2, 2)), variances=np.ones(2))
        with pytest.raises(ConfigurationError):
            GaussianMixture(weights=np.array([1.0]),
                            means=np.zeros((1, 2)), variances=np.array([0.0]))
        with pytest.raises(ConfigurationError):
            GaussianMixture(weights=np.array([1.0]),
                            means=np.array([[np.inf, 0.0]]), variances=np.array([1.0]))

    def test_ring_mixture_layout(self):
        ring = ring_mixture(num_components=4, radius=2.0, variance=0.1)
        assert ring.num_components == 4
        assert ring.dim == 2
        np.testing.assert_allclose(np.linalg.norm(ring.means, axis=1), 2.0)
        np.testing.assert_allclose(ring.weights, 0.25)

    def test_sample_prior_moments(self, two_modes):
        rng = np.random.default_rng(0)
        xs = sample_prior(two_modes, 200_000, rng)
        mean_true = two_modes.weights @ two_modes.means
        np.testing.assert_allclose(xs.mean(axis=0), mean_true, atol=0.01)
        # total variance = E[v_i] + Var of component means, per coordinate
        ev = two_modes.weights @ two_modes.variances
        spread = two_modes.means - mean_true
        var_true = ev + two_modes.weights @ (spread ** 2)
        np.testing.assert_allclose(xs.var(axis=0), var_true, rtol=0.02)


class TestDiffusedParams:
    def test_vp_interpolates_prior_to_standard_normal(self, two_modes):
        p1 = diffused_params(two_modes, 1.0)
        np.testing.assert_allclose(p1.means, two_modes.means)
        np.testing.assert_allclose(p1.variances, two_modes.variances)
        p0 = diffused_params(two_modes, 1e-12)
        np.testing.assert_allclose(p0.means, 0.0, atol=1e-5)
        np.testing.assert_allclose(p0.variances, 1.0, atol=1e-5)

    def test_flow_params_endpoints(self, two_modes):
        p0 = flow_params(two_modes, 0.0)
        np.testing.assert_allclose(p0.means, two_modes.means)
        p1 = flow_params(two_modes, 1.0)
        np.testing.assert_allclose(p1.means, 0.0)
        np.testing.assert_allclose(p1.variances, 1.0)

    def test_invalid_inputs(self, two_modes):
        with pytest.raises(ConfigurationError):
            diffused_params(two_modes, 0.0)
        with pytest.raises(ConfigurationError):
            flow_params(two_modes, 1.5)


class TestDensities:
    def test_log_density_matches_scipy(self, two_modes):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(64, 2)) * 2.0
        params = diffused_params(two_modes, 0.37)
        np.testing.assert_allclose(log_density(two_modes, x, params),
                                   brute_force_log_density(two_modes, x, params),
                                   rtol=1e-10)

    def test_log_density_far_tail_is_finite(self, ring):
        # log-sum-exp path must survive points where every pdf underflows
        x = np.array([[80.0, -90.0]])
        ld = log_density_p0(ring, x)
        assert np.isfinite(ld).all()
        assert ld[0] < -1000

    def test_responsibilities_sum_to_one(self, ring):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(32, 2)) * 3
        gamma = responsibilities(ring, x, diffused_params(ring, 0.5))
        np.testing.assert_allclose(gamma.sum(axis=1), 1.0, rtol=1e-12)
        assert np.all(gamma >= 0)


class TestScore:
    def test_score_matches_finite_difference(self, two_modes):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(200, 2)) * 2.5
        params = diffused_params(two_modes, 0.61)
        analytic = score(two_modes, x, params)
        h = 1e-6
        for axis in range(2):
            shift = np.zeros(2)
            shift[axis] = h
            fd = (log_density(two_modes, x + shift, params)
                  - log_density(two_modes, x - shift, params)) / (2 * h)
            np.testing.assert_allclose(analytic[:, axis], fd, atol=1e-5)

    def test_single_gaussian_score_closed_form(self, single_gaussian):
        x = np.array([[1.0, 2.0], [-0.5, 0.3]])
        params = diffused_params(single_gaussian, 0.8)
        expected = (params.means[0] - x) / params.variances[0]
        np.testing.assert_allclose(score(single_gaussian, x, params), expected,
                                   rtol=1e-12)

    def test_epsilon_pred_consistency(self, two_modes, diffusion):
        # eps_hat = -sqrt(1 - abar) * score, and Tweedie x0_hat stays finite
        x = np.array([[0.5, -1.0]])
        t = 25
        eps = epsilon_pred(two_modes, x, diffusion, t)
        abar = diffusion.alpha_bar[t]
        sc = score(two_modes, x, diffused_params(two_modes, abar))
        np.testing.assert_allclose(eps, -np.sqrt(1 - abar) * sc, rtol=1e-12)


class TestFlowPosterior:
    def test_posterior_identity(self, two_modes):
        # the linear path pins (1-s) E[x0|x] + s E[eps|x] = x exactly
        rng = np.random.default_rng(4)
        x = rng.normal(size=(50, 2)) * 2
        for s in (0.1, 0.5, 0.9):
            e_eps, e_x0 = posterior_means(two_modes, x, s)
            np.testing.assert_allclose((1 - s) * e_x0 + s * e_eps, x, rtol=1e-9)

    def test_velocity_equals_score_transform(self, two_modes):
        # independent relation for the linear path: E[eps | x_s] = -s * score_s(x)
        rng = np.random.default_rng(5)
        x = rng.normal(size=(50, 2)) * 2
        for s in (0.2, 0.7):
            e_eps, _ = posterior_means(two_modes, x, s)
            sc = score(two_modes, x, flow_params(two_modes, s))
            np.testing.assert_allclose(e_eps, -s * sc, rtol=1e-9)

    def test_monte_carlo_posterior_mean(self, single_gaussian):
        # For one Gaussian the posterior mean of x0 is linear in x; verify by
        # simulating the forward path and binning.
        s = 0.6
        rng = np.random.default_rng(6)
        x0 = sample_prior(single_gaussian, 400_000, rng)
        eps = rng.standard_normal(x0.shape)
        xs = (1 - s) * x0 + s * eps
        probe = np.array([[0.2, -0.1]])
        near = np.linalg.norm(xs - probe, axis=1) < 0.05
        _, e_x0 = posterior_means(single_gaussian, probe, s)
        tol = 4 * x0[near].std(axis=0).max() / np.sqrt(near.sum())
        np.testing.assert_allclose(x0[near].mean(axis=0), e_x0[0], atol=tol)

    def test_velocity_domain(self, two_modes):
        with pytest.raises(ConfigurationError):
            velocity(two_modes, np.zeros((1, 2)), 0.0)
