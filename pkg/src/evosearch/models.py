"""Analytic Gaussian-mixture generative models.

The "pre-trained" model is an isotropic Gaussian mixture whose diffused
marginals, score, epsilon-prediction and flow velocity are all available in
closed form, so every sampler and search method downstream can be tested
deterministically against exact quantities.

Conventions:
  * diffusion (variance preserving): x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
  * flow (linear path):              x_s = (1 - s) x0 + s eps, s in [0, 1]
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError
from .schedules import NoiseSchedule


class ModelKind(enum.Enum):
    DIFFUSION_EPSILON = "diffusion_epsilon"
    FLOW_VELOCITY = "flow_velocity"


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of isotropic Gaussians: weights w_i, means mu_i, variances v_i."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.asarray(self.variances, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)
        if w.ndim != 1 or mu.shape[0] != w.size or v.shape != w.shape:
            raise ConfigurationError("weights, means and variances must have matching lengths")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError("weights must be positive and sum to 1 within 1e-12")
        if np.any(v <= 0):
            raise ConfigurationError("component variances must be > 0")
        if not np.all(np.isfinite(mu)):
            raise ConfigurationError("component means must be finite")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def num_components(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class DiffusedParams:
    """Per-component (mean, isotropic variance) of a diffused marginal p_t; weights unchanged."""

    means: np.ndarray
    variances: np.ndarray


def sample_prior(model: GaussianMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. samples from the mixture."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    comp = rng.choice(model.num_components, size=n, p=model.weights)
    eps = rng.standard_normal((n, model.dim))
    return model.means[comp] + np.sqrt(model.variances[comp])[:, None] * eps


def diffused_params(model: GaussianMixture, alpha_bar_t: float,
                    sigma_t_sq_total: float | None = None) -> DiffusedParams:
    """Marginal p_t components under the variance-preserving forward process.

    Component i maps to mean sqrt(abar) mu_i and variance abar v_i + noise,
    where noise defaults to 1 - abar (the VP convention).
    """
    if not 0.0 < alpha_bar_t <= 1.0:
        raise ConfigurationError(f"alpha_bar_t must lie in (0, 1], got {alpha_bar_t}")
    noise = (1.0 - alpha_bar_t) if sigma_t_sq_total is None else sigma_t_sq_total
    if noise < 0:
        raise ConfigurationError(f"total noise variance must be >= 0, got {noise}")
    return DiffusedParams(means=np.sqrt(alpha_bar_t) * model.means,
                          variances=alpha_bar_t * model.variances + noise)


def flow_params(model: GaussianMixture, s: float) -> DiffusedParams:
    """Marginal components at flow time s: mean (1-s) mu_i, variance (1-s)^2 v_i + s^2."""
    if not 0.0 <= s <= 1.0:
        raise ConfigurationError(f"s must lie in [0, 1], got {s}")
    return DiffusedParams(means=(1.0 - s) * model.means,
                          variances=(1.0 - s) ** 2 * model.variances + s ** 2)


def _log_component_densities(model: GaussianMixture, x: np.ndarray,
                             params: DiffusedParams) -> np.ndarray:
    """log(w_i N(x; m_i, V_i I)) for each component; x is (n, d), result (n, c)."""
    x = np.atleast_2d(x)
    d = x.shape[1]
    diff = x[:, None, :] - params.means[None, :, :]            # (n, c, d)
    sq = np.sum(diff * diff, axis=2)                           # (n, c)
    return (np.log(model.weights)[None, :]
            - 0.5 * sq / params.variances[None, :]
            - 0.5 * d * np.log(2.0 * np.pi * params.variances)[None, :])


def responsibilities(model: GaussianMixture, x: np.ndarray,
                     params: DiffusedParams) -> np.ndarray:
    """Posterior component probabilities gamma_i(x), computed in log space."""
    logc = _log_component_densities(model, np.atleast_2d(x), params)
    return np.exp(logc - logsumexp(logc, axis=1, keepdims=True))


def log_density(model: GaussianMixture, x: np.ndarray, params: DiffusedParams) -> np.ndarray:
    """Mixture log-density at the given diffused params (stable log-sum-exp)."""
    return logsumexp(_log_component_densities(model, np.atleast_2d(x), params), axis=1)


def log_density_p0(model: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Clean-data mixture log-density log p0(x)."""
    p0 = DiffusedParams(means=model.means, variances=model.variances)
    return log_density(model, x, p0)


def score(model: GaussianMixture, x: np.ndarray, params: DiffusedParams) -> np.ndarray:
    """Exact mixture score grad_x log p_t(x) = sum_i gamma_i (m_i - x) / V_i."""
    x = np.atleast_2d(x)
    gamma = responsibilities(model, x, params)                 # (n, c)
    contrib = (params.means[None, :, :] - x[:, None, :]) / params.variances[None, :, None]
    return np.sum(gamma[:, :, None] * contrib, axis=1)


def epsilon_pred(model: GaussianMixture, x: np.ndarray, schedule: NoiseSchedule,
                 t: int) -> np.ndarray:
    """Noise prediction eps_hat = -sqrt(1 - abar_t) * score(x, t)."""
    abar = schedule.alpha_bar[t]
    return -np.sqrt(1.0 - abar) * score(model, x, diffused_params(model, abar))


def posterior_means(model: GaussianMixture, x: np.ndarray,
                    s: float) -> tuple[np.ndarray, np.ndarray]:
    """(E[eps | x_s], E[x0 | x_s]) under the flow path, from component responsibilities."""
    x = np.atleast_2d(x)
    params = flow_params(model, s)
    gamma = responsibilities(model, x, params)
    diff = x[:, None, :] - params.means[None, :, :]
    # Gaussian conditioning of the joint (x0, eps, x_s) per component.
    e_eps = np.sum(gamma[:, :, None] * (s / params.variances)[None, :, None] * diff, axis=1)
    e_x0 = np.sum(
        gamma[:, :, None]
        * (model.means[None, :, :]
           + ((1.0 - s) * model.variances / params.variances)[None, :, None] * diff),
        axis=1)
    return e_eps, e_x0


def velocity(model: GaussianMixture, x: np.ndarray, s: float) -> np.ndarray:
    """Exact flow velocity u_s(x) = E[eps - x0 | x_s = x] for the linear path."""
    if not 0.0 < s <= 1.0:
        raise ConfigurationError(f"s must lie in (0, 1], got {s}")
    e_eps, e_x0 = posterior_means(model, x, s)
    return e_eps - e_x0


def ring_mixture(num_components: int = 8, radius: float = 1.0,
                 variance: float = 0.04) -> GaussianMixture:
    """Equal-weight mixture with components evenly spaced on a 2-D circle."""
    angles = 2.0 * np.pi * np.arange(num_components) / num_components
    means = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    weights = np.full(num_components, 1.0 / num_components)
    return GaussianMixture(weights=weights, means=means,
                           variances=np.full(num_components, variance))
