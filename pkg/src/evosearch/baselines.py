"""Best-of-N and Feynman-Kac particle sampling with a running-max potential.

Both baselines share the samplers, reward functions and NFE accounting of the
search code so budget-matched comparisons stay honest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .models import GaussianMixture, epsilon_pred, velocity
from .rewards import RewardFn, reward
from .samplers import NfeLedger, denoise_one_step, denoise_to_end
from .schedules import FlowTimeGrid, NoiseSchedule
from .search import Archive, SearchResult, ranked_indices, running_best

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParticleSamplingConfig:
    num_particles: int
    resample_interval: int = 5
    lam: float = 10.0
    resampling: str = "systematic"
    final_k: int = 10

    def __post_init__(self):
        if self.num_particles < 1:
            raise ConfigurationError(f"num_particles must be >= 1, got {self.num_particles}")
        if self.resample_interval < 1:
            raise ConfigurationError(
                f"resample_interval must be >= 1, got {self.resample_interval}")
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam}")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigurationError(f"unknown resampling mode {self.resampling!r}")


def _result_from_single_round(x0: np.ndarray, r: np.ndarray, ledger: NfeLedger,
                              final_k: int) -> SearchResult:
    archive = Archive()
    archive.extend(x0, r, 0, ledger.model_calls)
    order = ranked_indices(r)[:final_k]
    stats = [{"generation": 0, "mean": float(r.mean()), "max": float(r.max()),
              "std": float(r.std()), "pool_sizes": [int(r.size)]}]
    return SearchResult(outputs=x0[order].copy(), output_rewards=np.asarray(r)[order],
                        best_reward_curve=running_best(archive),
                        generation_stats=stats, ledger=ledger, archive=archive)


def best_of_n(n: int, model: GaussianMixture,
              schedule: NoiseSchedule | FlowTimeGrid, fn: RewardFn, seed: int,
              final_k: int = 10) -> SearchResult:
    """Denoise n independent noises to x0, score, and rank."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    ledger = NfeLedger()
    x = rng.standard_normal((n, model.dim))
    x0 = denoise_to_end(x, schedule.num_steps, model, schedule, rng, ledger)
    r = reward(fn, x0, ledger)
    return _result_from_single_round(x0, r, ledger, final_k)


def posterior_mean_x0(x_t: np.ndarray, t: int, model: GaussianMixture,
                      schedule: NoiseSchedule | FlowTimeGrid,
                      ledger: NfeLedger | None = None) -> np.ndarray:
    """Expected clean sample given a noisy state (exact Tweedie for the mixture).

    Diffusion: (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
    Flow: x_s - s u_s(x_s).  Counts one model call per particle.
    """
    x_t = np.atleast_2d(x_t)
    if t == 0:
        return x_t.copy()
    if ledger is not None:
        ledger.add_model_calls(x_t.shape[0])
    if isinstance(schedule, FlowTimeGrid):
        s = schedule.s_of(t)
        return x_t - s * velocity(model, x_t, s)
    abar = schedule.alpha_bar[t]
    if abar <= 0:
        raise ConfigurationError("posterior_mean_x0 undefined at alpha_bar = 0")
    eps_hat = epsilon_pred(model, x_t, schedule, t)
    return (x_t - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)


def resample(states: np.ndarray, weights: np.ndarray, mode: str,
             rng: np.random.Generator) -> np.ndarray:
    """Resample states by weight; returns (resampled states, ancestor indices)."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ConfigurationError("weights must be non-negative, finite and not all zero")
    w = w / w.sum()
    n = states.shape[0]
    if mode == "multinomial":
        idx = rng.choice(n, size=n, p=w)
    elif mode == "systematic":
        positions = (rng.uniform() + np.arange(n)) / n
        idx = np.searchsorted(np.cumsum(w), positions, side="right")
        idx = np.minimum(idx, n - 1)
    else:
        raise ConfigurationError(f"unknown resampling mode {mode!r}")
    return states[idx].copy(), idx


def particle_sampling(cfg: ParticleSamplingConfig, model: GaussianMixture,
                      schedule: NoiseSchedule | FlowTimeGrid, fn: RewardFn,
                      seed: int) -> SearchResult:
    """Lockstep particle denoising steered by the running max of reward estimates.

    Every resample_interval steps the particles are rescored through their
    posterior-mean x0 estimate; incremental weights exp(lam * (M_new - M_prev))
    telescope to exp(lam * M_final) across events.
    """
    rng = np.random.default_rng(seed)
    ledger = NfeLedger()
    num_steps = schedule.num_steps
    x = rng.standard_normal((cfg.num_particles, model.dim))
    run_max = None
    for t in range(num_steps, 0, -1):
        elapsed = num_steps - t
        if 0 < elapsed and elapsed % cfg.resample_interval == 0:
            x0_hat = posterior_mean_x0(x, t, model, schedule, ledger)
            r_hat = reward(fn, x0_hat, ledger)
            new_max = r_hat if run_max is None else np.maximum(run_max, r_hat)
            increment = new_max if run_max is None else new_max - run_max
            logw = cfg.lam * increment
            w = np.exp(logw - logw.max())
            if not np.isfinite(w).all() or w.sum() <= 0:
                logger.warning("particle weights degenerate at step %d; "
                               "falling back to uniform resampling", t)
                w = np.ones_like(w)
            x, idx = resample(x, w, cfg.resampling, rng)
            run_max = new_max[idx]
        x = denoise_one_step(x, t, model, schedule, rng, ledger)
    r = reward(fn, x, ledger)
    return _result_from_single_round(x, r, ledger, cfg.final_k)
