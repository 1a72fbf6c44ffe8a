"""Time discretizations for diffusion/flow sampling and search-schedule validation.

Diffusion runs on integer step indices t = num_steps, ..., 1, 0 with cumulative
signal coefficients alpha_bar[t] (alpha_bar[0] = 1, strictly decreasing).  Flow
runs on the same integer indexing, mapped onto a real-valued grid s in [0, 1]
with s = 1 pure noise and s = 0 data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ScheduleError


@dataclass(frozen=True)
class NoiseSchedule:
    """Discrete variance-preserving schedule for the DDIM-family stochastic sampler.

    ``alpha_bar`` has length ``num_steps + 1`` with ``alpha_bar[0] = 1``;
    ``eta`` in [0, 1] scales the per-step stochasticity sigma_t (eta = 0 is
    deterministic DDIM, eta = 1 is ancestral-style sampling).
    """

    alpha_bar: np.ndarray
    eta: float

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=float)
        object.__setattr__(self, "alpha_bar", ab)
        if ab.ndim != 1 or ab.size < 2:
            raise ConfigurationError("alpha_bar must be a 1-D array with >= 2 entries")
        if ab[0] != 1.0:
            raise ConfigurationError(f"alpha_bar[0] must be 1.0, got {ab[0]}")
        if ab[-1] <= 0.0:
            raise ConfigurationError(f"alpha_bar[-1] must be > 0, got {ab[-1]}")
        if np.any(np.diff(ab) >= 0):
            raise ConfigurationError("alpha_bar must be strictly decreasing")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError(f"eta must lie in [0, 1], got {self.eta}")
        # the step formula needs sigma_t^2 <= 1 - alpha_bar[t-1] at every step
        for t in range(1, self.num_steps + 1):
            s2 = self.sigma(t) ** 2
            if not np.isfinite(s2) or s2 < 0:
                raise ScheduleError(f"sigma at step {t} is not finite and non-negative")
            if 1.0 - ab[t - 1] - s2 < -1e-12:
                raise ScheduleError(f"negative radicand 1 - alpha_bar[{t - 1}] - sigma^2")

    @property
    def num_steps(self) -> int:
        return self.alpha_bar.size - 1

    def sigma(self, t: int) -> float:
        """Stochasticity sigma_t of the step t -> t-1 (t >= 1)."""
        if t < 1 or t > self.num_steps:
            raise ScheduleError(f"sigma requested at step {t}, valid range [1, {self.num_steps}]")
        a, ap = self.alpha_bar[t], self.alpha_bar[t - 1]
        return self.eta * np.sqrt((1.0 - ap) / (1.0 - a)) * np.sqrt(1.0 - a / ap)


def make_linear_schedule(num_steps: int, beta_min: float, beta_max: float,
                         eta: float) -> NoiseSchedule:
    """Standard linear-beta construction: alpha_bar[t] = prod_{i<=t} (1 - beta_i)."""
    if num_steps < 1:
        raise ConfigurationError(f"num_steps must be >= 1, got {num_steps}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ConfigurationError(
            f"need 0 < beta_min <= beta_max < 1, got beta_min={beta_min}, beta_max={beta_max}")
    betas = np.linspace(beta_min, beta_max, num_steps)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(alpha_bar=alpha_bar, eta=eta)


@dataclass(frozen=True)
class FlowTimeGrid:
    """Real-valued grid for flow sampling, s = 1 (noise) down to s = 0 (data).

    ``sigma`` holds the per-step diffusion coefficient sigma_s for the SDE
    form, evaluated at the step's starting s; sigma == 0 everywhere recovers
    the deterministic ODE.  Integer step indices t = num_steps..0 map onto the
    grid via ``s_of``.
    """

    s_values: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s_values, dtype=float)
        sig = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "s_values", s)
        object.__setattr__(self, "sigma", sig)
        if s.ndim != 1 or s.size < 2:
            raise ConfigurationError("s_values must be a 1-D array with >= 2 entries")
        if s[0] != 1.0 or s[-1] != 0.0:
            raise ConfigurationError("s_values must run from 1.0 down to 0.0")
        if np.any(np.diff(s) >= 0):
            raise ConfigurationError("s_values must be strictly decreasing")
        if sig.shape != (s.size - 1,):
            raise ConfigurationError("sigma must have one entry per step")
        if np.any(sig < 0):
            raise ConfigurationError("sigma entries must be >= 0")

    @property
    def num_steps(self) -> int:
        return self.s_values.size - 1

    def s_of(self, t: int) -> float:
        """s value at integer step index t (t = num_steps is s = 1, t = 0 is s = 0)."""
        if t < 0 or t > self.num_steps:
            raise ScheduleError(f"step index {t} outside [0, {self.num_steps}]")
        return float(self.s_values[self.num_steps - t])

    def sigma_at(self, t: int) -> float:
        """Diffusion coefficient for the step t -> t-1 (t >= 1)."""
        if t < 1 or t > self.num_steps:
            raise ScheduleError(f"sigma requested at step {t}, valid range [1, {self.num_steps}]")
        return float(self.sigma[self.num_steps - t])


def make_flow_grid(num_steps: int, sigma_scale: float = 0.0) -> FlowTimeGrid:
    """Uniform s-grid with sigma_s = sigma_scale * s (stochasticity vanishing at data end)."""
    if num_steps < 1:
        raise ConfigurationError(f"num_steps must be >= 1, got {num_steps}")
    if sigma_scale < 0:
        raise ConfigurationError(f"sigma_scale must be >= 0, got {sigma_scale}")
    s = np.linspace(1.0, 0.0, num_steps + 1)
    return FlowTimeGrid(s_values=s, sigma=sigma_scale * s[:-1])


@dataclass(frozen=True)
class EvolutionSchedule:
    """Step indices at which evolutionary generations run, strictly decreasing from the start step."""

    times: tuple = field(default_factory=tuple)

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if not times:
            raise ConfigurationError("evolution schedule must contain at least one step")
        if any(t < 1 for t in times):
            raise ConfigurationError("evolution-schedule steps must be >= 1")
        if any(b >= a for a, b in zip(times, times[1:])):
            raise ConfigurationError(f"evolution schedule must be strictly decreasing, got {times}")


@dataclass(frozen=True)
class PopulationSchedule:
    """Population sizes: initial noise pool first, then one entry per generation."""

    sizes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise ConfigurationError("population schedule must contain at least one size")
        if any(k < 1 for k in sizes):
            raise ConfigurationError("population sizes must be >= 1")


def uniform_evolution_schedule(num_steps: int, num_generations: int) -> EvolutionSchedule:
    """Uniform-interval schedule {T, T - T/n, ...} with n entries."""
    if num_generations < 1 or num_generations > num_steps:
        raise ConfigurationError(
            f"num_generations must be in [1, {num_steps}], got {num_generations}")
    step = num_steps / num_generations
    times = [num_steps - round(j * step) for j in range(num_generations)]
    return EvolutionSchedule(times=tuple(times))


def validate_schedules(schedule_T: EvolutionSchedule, schedule_K: PopulationSchedule,
                       steps: int):
    """Check joint consistency of an evolution/population schedule pair."""
    if len(schedule_K.sizes) != len(schedule_T.times) + 1:
        raise ConfigurationError(
            f"population schedule needs len(T)+1 = {len(schedule_T.times) + 1} entries, "
            f"got {len(schedule_K.sizes)}")
    if schedule_T.times[0] > steps:
        raise ConfigurationError(
            f"first evolution step {schedule_T.times[0]} exceeds num_steps {steps}")
    if schedule_T.times[0] != steps:
        raise ConfigurationError(
            f"evolution schedule must start at the start step {steps}, got {schedule_T.times[0]}")
    if len(schedule_K.sizes) > 1 and schedule_K.sizes[0] < schedule_K.sizes[1]:
        warnings.warn("k_start < k_T: a larger initial noise pool is recommended",
                      stacklevel=2)
    return schedule_T, schedule_K
