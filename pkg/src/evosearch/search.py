"""Evolutionary search over denoising trajectories.

The driver samples a pool of Gaussian noises, walks the reverse trajectory,
and at each scheduled step runs a generation: denoise the current population
to clean samples, score them, select elites and tournament parents from the
accumulated pool at that step, and mutate the parents (Gaussian-preserving
blend at the start step, sigma_t noise injection at intermediate steps).
Every denoised-and-scored sample enters a global archive; the final outputs
are the archive's top entries.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .models import GaussianMixture
from .rewards import RewardFn, fitness
from .samplers import (NfeLedger, TrajectoryHook, denoise_one_step,
                       mutation_scale)
from .schedules import (EvolutionSchedule, FlowTimeGrid, NoiseSchedule,
                        PopulationSchedule, validate_schedules)


@dataclass(frozen=True)
class EvoConfig:
    """All hyperparameters of the evolutionary search."""

    schedule_T: EvolutionSchedule
    schedule_K: PopulationSchedule
    beta: float = 0.3
    elites: int = 1
    tournament_size: int = 2
    final_k: int = 10

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError(f"beta must lie in [0, 1], got {self.beta}")
        if self.elites < 0:
            raise ConfigurationError(f"elites must be >= 0, got {self.elites}")
        if self.tournament_size < 1:
            raise ConfigurationError(
                f"tournament_size must be >= 1, got {self.tournament_size}")
        if self.final_k < 1:
            raise ConfigurationError(f"final_k must be >= 1, got {self.final_k}")
        ks = self.schedule_K.sizes[1:]
        if any(self.elites > k for k in ks):
            raise ConfigurationError(
                f"elites={self.elites} exceeds a generation population size in {ks}")
        rolled = self.schedule_K.sizes[1:-1]  # the final batch is never rolled out
        if any(self.elites > k / 4 for k in rolled):
            warnings.warn(f"elites={self.elites} is large relative to population sizes {rolled}",
                          stacklevel=2)


@dataclass
class PopulationLedger:
    """One accumulating pool of cached states per evolution-schedule index."""

    pools: list

    @classmethod
    def empty(cls, num_generations: int) -> "PopulationLedger":
        return cls(pools=[[] for _ in range(num_generations)])

    def concat(self, idx: int) -> np.ndarray:
        return np.concatenate(self.pools[idx], axis=0)

    def size(self, idx: int) -> int:
        return sum(batch.shape[0] for batch in self.pools[idx])


@dataclass
class RewardLedger:
    """Reward lists aligned 1:1 (by concatenation order) with PopulationLedger pools."""

    rewards: list

    @classmethod
    def empty(cls, num_generations: int) -> "RewardLedger":
        return cls(rewards=[[] for _ in range(num_generations)])

    def concat(self, idx: int) -> np.ndarray:
        return np.concatenate(self.rewards[idx], axis=0)

    def size(self, idx: int) -> int:
        return sum(r.shape[0] for r in self.rewards[idx])


@dataclass
class Archive:
    """Event log of every reward-evaluated clean sample, in evaluation order."""

    samples: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    generations: list = field(default_factory=list)
    nfe: list = field(default_factory=list)

    def extend(self, x0: np.ndarray, r: np.ndarray, generation: int, nfe: int):
        for i in range(x0.shape[0]):
            self.samples.append(np.array(x0[i]))
            self.rewards.append(float(r[i]))
            self.generations.append(generation)
            self.nfe.append(nfe)

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class SearchResult:
    """Ranked outputs plus the curves and counters needed for comparison plots."""

    outputs: np.ndarray
    output_rewards: np.ndarray
    best_reward_curve: np.ndarray
    generation_stats: list
    ledger: NfeLedger
    archive: Archive

    @property
    def best_reward(self) -> float:
        return float(self.output_rewards[0])


def ranked_indices(rewards: np.ndarray) -> np.ndarray:
    """Indices sorted by reward descending, ties broken by lowest index."""
    rewards = np.asarray(rewards, dtype=float)
    return np.lexsort((np.arange(rewards.size), -rewards))


def running_best(archive: Archive) -> np.ndarray:
    """Prefix-maximum of archive rewards in evaluation (NFE) order."""
    if len(archive) == 0:
        raise ConfigurationError("running_best of an empty archive")
    return np.maximum.accumulate(np.asarray(archive.rewards, dtype=float))


def mutate_initial_noise(parents: np.ndarray, beta: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Gaussian-preserving blend: child = sqrt(1 - beta^2) parent + beta xi."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError(f"beta must lie in [0, 1], got {beta}")
    xi = rng.standard_normal(parents.shape)
    return np.sqrt(1.0 - beta * beta) * parents + beta * xi


def mutate_intermediate(parents: np.ndarray, t: int,
                        schedule: NoiseSchedule | FlowTimeGrid,
                        rng: np.random.Generator) -> np.ndarray:
    """Reverse-SDE-style perturbation: child = parent + sigma_t xi."""
    sig = mutation_scale(schedule, t)
    if sig <= 0.0:
        raise ConfigurationError(
            f"sigma at step {t} is 0; intermediate mutation needs a stochastic "
            "schedule (eta > 0 for diffusion, sigma_scale > 0 for flow)")
    return parents + sig * rng.standard_normal(parents.shape)


def tournament_select(pool: np.ndarray, pool_fitness: np.ndarray, k: int, b: int,
                      rng: np.random.Generator) -> np.ndarray:
    """k independent tournament cycles; each draws b entrants without replacement.

    Ties break by lowest pool index; duplicates across cycles are allowed.
    """
    n = pool.shape[0]
    if n == 0:
        raise ConfigurationError("tournament selection over an empty pool")
    if b > n:
        raise ConfigurationError(f"tournament size {b} exceeds pool size {n}")
    winners = np.empty(k, dtype=int)
    for c in range(k):
        entrants = np.sort(rng.choice(n, size=b, replace=False))
        winners[c] = entrants[np.argmax(pool_fitness[entrants])]
    return pool[winners].copy()


def evosearch_generation(x_start: np.ndarray, g: int, pop: PopulationLedger,
                         rew: RewardLedger, archive: Archive, cfg: EvoConfig,
                         model: GaussianMixture,
                         schedule: NoiseSchedule | FlowTimeGrid, fn: RewardFn,
                         rng: np.random.Generator, ledger: NfeLedger) -> np.ndarray:
    """One generation at step T[g]: rollout, score, select, mutate.

    Caches rollout states at every scheduled step (the start step included)
    into the population ledger, broadcasts the rollout rewards to all schedule
    indices >= g, and returns the children batch at step T[g].
    """
    times = cfg.schedule_T.times
    t_start = times[g]
    index_of = {t: j for j, t in enumerate(times)}
    hook = TrajectoryHook(
        times=frozenset(t for t in times if t <= t_start),
        callback=lambda t, x: pop.pools[index_of[t]].append(np.array(x)))

    r, x0 = fitness(x_start, t_start, model, schedule, fn, rng, ledger, hooks=(hook,))
    for i in range(g, len(times)):
        rew.rewards[i].append(r)
    archive.extend(x0, r, g, ledger.model_calls)

    k = cfg.schedule_K.sizes[g + 1]
    m = cfg.elites
    if m > k:
        raise ConfigurationError(f"elites={m} exceeds population size k={k}")
    pool = pop.concat(g)
    pool_r = rew.concat(g)
    order = ranked_indices(pool_r)
    elites = pool[order[:m]].copy()
    if k - m > 0:
        parents = tournament_select(pool, pool_r, k - m, cfg.tournament_size, rng)
        if g == 0:
            parents = mutate_initial_noise(parents, cfg.beta, rng)
        else:
            parents = mutate_intermediate(parents, t_start, schedule, rng)
        return np.concatenate([elites, parents], axis=0)
    return elites


def _generation_stats(archive: Archive, pop: PopulationLedger, g: int) -> dict:
    mask = np.asarray(archive.generations) == g
    rs = np.asarray(archive.rewards, dtype=float)[mask]
    return {"generation": g, "mean": float(rs.mean()), "max": float(rs.max()),
            "std": float(rs.std()),
            "pool_sizes": [pop.size(j) for j in range(len(pop.pools))]}


def _finalize(archive: Archive, ledger: NfeLedger, final_k: int,
              generation_stats: list) -> SearchResult:
    rewards = np.asarray(archive.rewards, dtype=float)
    order = ranked_indices(rewards)[:final_k]
    outputs = np.stack([archive.samples[i] for i in order], axis=0)
    return SearchResult(outputs=outputs, output_rewards=rewards[order],
                        best_reward_curve=running_best(archive),
                        generation_stats=generation_stats, ledger=ledger,
                        archive=archive)


def evosearch_run(cfg: EvoConfig, model: GaussianMixture,
                  schedule: NoiseSchedule | FlowTimeGrid, fn: RewardFn,
                  seed: int) -> SearchResult:
    """Full search: k_start noises at T, generations at each scheduled step.

    The last generation's children are not denoised further: outputs come from
    the archive of already-evaluated clean samples.
    """
    validate_schedules(cfg.schedule_T, cfg.schedule_K, schedule.num_steps)
    times = cfg.schedule_T.times
    rng = np.random.default_rng(seed)
    ledger = NfeLedger()
    pop = PopulationLedger.empty(len(times))
    rew = RewardLedger.empty(len(times))
    archive = Archive()
    stats = []

    x = rng.standard_normal((cfg.schedule_K.sizes[0], model.dim))
    g = 0
    time_set = set(times)
    for t in range(times[0], 0, -1):
        if t in time_set:
            x = evosearch_generation(x, g, pop, rew, archive, cfg, model,
                                     schedule, fn, rng, ledger)
            stats.append(_generation_stats(archive, pop, g))
            g += 1
            if g == len(times):
                break
        x = denoise_one_step(x, t, model, schedule, rng, ledger)
    return _finalize(archive, ledger, cfg.final_k, stats)


def predicted_nfe(schedule_T: EvolutionSchedule, schedule_K: PopulationSchedule) -> int:
    """Model calls an evosearch_run will consume (last children never denoised)."""
    times = schedule_T.times
    sizes = schedule_K.sizes
    total = sizes[0] * times[0]
    for g in range(1, len(times)):
        total += sizes[g] * times[g - 1]
    return total
