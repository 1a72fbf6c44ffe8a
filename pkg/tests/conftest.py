"""Shared fixtures: small mixtures and schedules used across the suite."""

import numpy as np
import pytest

from evosearch.models import GaussianMixture, ring_mixture
from evosearch.schedules import make_flow_grid, make_linear_schedule


@pytest.fixture
def ring():
    return ring_mixture(num_components=8, radius=1.0, variance=0.2)


@pytest.fixture
def two_modes():
    return GaussianMixture(weights=np.array([0.3, 0.7]),
                           means=np.array([[-1.0, 0.0], [1.5, 0.5]]),
                           variances=np.array([0.2, 0.5]))


@pytest.fixture
def single_gaussian():
    return GaussianMixture(weights=np.array([1.0]),
                           means=np.array([[0.4, -0.3]]),
                           variances=np.array([0.35]))


@pytest.fixture
def diffusion():
    return make_linear_schedule(50, beta_min=0.002, beta_max=0.25, eta=1.0)


@pytest.fixture
def diffusion_ode():
    return make_linear_schedule(50, beta_min=0.002, beta_max=0.25, eta=0.0)


@pytest.fixture
def flow():
    return make_flow_grid(64, sigma_scale=0.5)
