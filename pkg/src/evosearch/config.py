"""Experiment configuration: YAML parsing and NFE-budget resolution.

A config resolves into validated module objects (mixture, schedule, reward,
method parameters).  Methods may declare either explicit search schedules or
an ``nfe_budget``; budgets are resolved into schedules whose predicted model
calls land within 5% of the budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .baselines import ParticleSamplingConfig
from .errors import ConfigurationError
from .models import GaussianMixture, ModelKind, ring_mixture
from .rewards import (RewardFn, circle_reward, expression_reward,
                      mixture_logdensity_reward, radial_band_reward)
from .schedules import (EvolutionSchedule, FlowTimeGrid, NoiseSchedule,
                        PopulationSchedule, make_flow_grid,
                        make_linear_schedule, uniform_evolution_schedule)
from .search import EvoConfig, predicted_nfe

METHODS = ("evosearch", "best_of_n", "particle_sampling")
BUDGET_TOLERANCE = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    model: GaussianMixture
    model_kind: ModelKind
    schedule: NoiseSchedule | FlowTimeGrid
    reward_fn: RewardFn
    reward_spec: dict
    method: str
    method_params: dict
    seeds: tuple
    output_dir: Path
    raw: dict = field(default_factory=dict)


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigurationError(f"missing field {key!r} in section {where!r}")
    return section[key]


def parse_mixture(spec: dict) -> GaussianMixture:
    if "ring" in spec:
        ring = spec["ring"]
        return ring_mixture(num_components=int(ring.get("num_components", 8)),
                            radius=float(ring.get("radius", 1.0)),
                            variance=float(ring.get("variance", 0.04)))
    try:
        return GaussianMixture(weights=np.asarray(_require(spec, "weights", "model.mixture")),
                               means=np.asarray(_require(spec, "means", "model.mixture")),
                               variances=np.asarray(_require(spec, "variances", "model.mixture")))
    except ConfigurationError as exc:
        raise ConfigurationError(f"model.mixture: {exc}") from None


def parse_schedule(spec: dict, kind: ModelKind) -> NoiseSchedule | FlowTimeGrid:
    steps = int(_require(spec, "num_steps", "schedule"))
    if kind is ModelKind.FLOW_VELOCITY:
        return make_flow_grid(steps, sigma_scale=float(spec.get("sigma_scale", 0.5)))
    return make_linear_schedule(steps,
                                beta_min=float(spec.get("beta_min", 0.002)),
                                beta_max=float(spec.get("beta_max", 0.25)),
                                eta=float(spec.get("eta", 1.0)))


def parse_reward(spec: dict, model: GaussianMixture) -> RewardFn:
    kind = _require(spec, "kind", "reward")
    if kind == "circle":
        return circle_reward(radius=float(spec.get("radius", 2.0)))
    if kind == "radial_band":
        return radial_band_reward(center=spec.get("center", [0.0] * model.dim),
                                  radius=float(_require(spec, "radius", "reward")),
                                  width=float(_require(spec, "width", "reward")))
    if kind == "mixture_logdensity":
        return mixture_logdensity_reward(model)
    if kind == "custom_expression":
        return expression_reward(str(_require(spec, "expression", "reward")))
    raise ConfigurationError(f"unknown reward kind {kind!r}")


def _check_budget(predicted: int, budget: int, method: str):
    if abs(predicted - budget) > BUDGET_TOLERANCE * budget:
        raise ConfigurationError(
            f"{method}: resolved schedule predicts {predicted} model calls, "
            f"more than {BUDGET_TOLERANCE:.0%} away from nfe_budget={budget}")


# Default evolution-schedule shape, as fractions of the trajectory length and
# per-generation size multipliers.  Front-loaded exploration (a triple-size
# initial pool plus evenly weighted mid-trajectory generations) followed by a
# fat final generation close to t=0: children spawned late are cheap to roll
# out, so most of the sampling density lands right where the reward is decided.
DEFAULT_TIME_FRACTIONS = (1.0, 0.6, 0.2, 0.1, 0.04)
DEFAULT_SIZE_MULTIPLIERS = (3.0, 2.0, 2.0, 2.0, 14.0)


def _shape_times(num_steps: int, fractions) -> tuple:
    times, prev = [], None
    for f in fractions:
        t = max(2, min(num_steps, round(f * num_steps)))
        if prev is not None:
            t = min(t, prev - 1)
        if t < 2:
            raise ConfigurationError(
                f"cannot fit {len(fractions)} generation times into {num_steps} steps")
        times.append(t)
        prev = t
    return tuple(times)


def _solve_population_sizes(times: tuple, multipliers, budget: int, floor: int,
                            tail: int) -> PopulationSchedule:
    """Scale the size multipliers so predicted model calls land on the budget.

    The trailing population entry (children of the last generation, which are
    never rolled out) is pinned to ``tail`` and costs nothing.
    """
    denom = multipliers[0] * times[0] + sum(
        multipliers[g] * times[g - 1] for g in range(1, len(times)))
    k0 = budget / denom
    best = None
    for scale in np.linspace(0.8 * k0, 1.2 * k0, 4001):
        sizes = tuple(max(floor, round(m * scale)) for m in multipliers) + (max(floor, tail),)
        err = abs(predicted_nfe(EvolutionSchedule(times), PopulationSchedule(sizes)) - budget)
        if best is None or err < best[0]:
            best = (err, sizes)
    return PopulationSchedule(sizes=best[1])


def resolve_evosearch(params: dict, num_steps: int) -> EvoConfig:
    final_k = int(params.get("final_k", 10))
    elites = int(params.get("elites", 4))
    explicit = "schedule_T" in params
    if explicit:
        sched_T = EvolutionSchedule(times=tuple(params["schedule_T"]))
        sched_K = PopulationSchedule(sizes=tuple(_require(params, "schedule_K", "evosearch")))
    else:
        budget = int(_require(params, "nfe_budget", "evosearch"))
        if "num_generations" in params:
            sched_T = uniform_evolution_schedule(num_steps, int(params["num_generations"]))
            multipliers = ((float(params.get("k_ratio", 2.0)),)
                           + (1.0,) * (len(sched_T.times) - 1))
        else:
            sched_T = EvolutionSchedule(times=_shape_times(
                num_steps, params.get("time_fractions", DEFAULT_TIME_FRACTIONS)))
            multipliers = tuple(params.get("size_multipliers", DEFAULT_SIZE_MULTIPLIERS))
        if len(multipliers) != len(sched_T.times):
            raise ConfigurationError(
                f"evosearch: need {len(sched_T.times)} size multipliers, "
                f"got {len(multipliers)}")
        sched_K = _solve_population_sizes(sched_T.times, multipliers, budget,
                                          floor=max(1, elites), tail=final_k)
        _check_budget(predicted_nfe(sched_T, sched_K), budget, "evosearch")
    cfg = EvoConfig(schedule_T=sched_T, schedule_K=sched_K,
                    beta=float(params.get("beta", 0.3)),
                    elites=elites,
                    tournament_size=int(params.get("tournament_size", 6)),
                    final_k=final_k)
    if "nfe_budget" in params and explicit:
        _check_budget(predicted_nfe(sched_T, sched_K), int(params["nfe_budget"]), "evosearch")
    return cfg


def resolve_best_of_n(params: dict, num_steps: int) -> dict:
    if "n" in params:
        n = int(params["n"])
        if "nfe_budget" in params:
            _check_budget(n * num_steps, int(params["nfe_budget"]), "best_of_n")
    else:
        budget = int(_require(params, "nfe_budget", "best_of_n"))
        n = max(1, round(budget / num_steps))
        _check_budget(n * num_steps, budget, "best_of_n")
    return {"n": n, "final_k": int(params.get("final_k", 10))}


def resolve_particle_sampling(params: dict, num_steps: int) -> ParticleSamplingConfig:
    interval = int(params.get("resample_interval", 5))
    events = (num_steps - 1) // interval
    cost_per_particle = num_steps + events
    if "num_particles" in params:
        particles = int(params["num_particles"])
        if "nfe_budget" in params:
            _check_budget(particles * cost_per_particle, int(params["nfe_budget"]),
                          "particle_sampling")
    else:
        budget = int(_require(params, "nfe_budget", "particle_sampling"))
        particles = max(1, round(budget / cost_per_particle))
        _check_budget(particles * cost_per_particle, budget, "particle_sampling")
    return ParticleSamplingConfig(num_particles=particles,
                                  resample_interval=interval,
                                  lam=float(params.get("lambda", 10.0)),
                                  resampling=str(params.get("resampling", "systematic")),
                                  final_k=int(params.get("final_k", 10)))


def load_config(path: str | Path, seed_override=None, output_dir=None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    return config_from_dict(raw, name=path.stem, seed_override=seed_override,
                            output_dir=output_dir)


def config_from_dict(raw: dict, name: str = "config", seed_override=None,
                     output_dir=None) -> ExperimentConfig:
    model_spec = _require(raw, "model", "config")
    kind = ModelKind(str(model_spec.get("kind", "diffusion_epsilon")))
    mixture = parse_mixture(_require(model_spec, "mixture", "model"))
    schedule = parse_schedule(_require(raw, "schedule", "config"), kind)
    reward_spec = dict(_require(raw, "reward", "config"))
    reward_fn = parse_reward(reward_spec, mixture)

    method = str(_require(raw, "method", "config"))
    if method not in METHODS:
        raise ConfigurationError(f"method must be one of {METHODS}, got {method!r}")
    method_params = dict(raw.get(method, {}))

    seeds = tuple(int(s) for s in (seed_override if seed_override is not None
                                   else raw.get("seeds", [0])))
    if not seeds:
        raise ConfigurationError("at least one seed is required")
    out = Path(output_dir if output_dir is not None
               else raw.get("output_dir", "runs/" + name))
    return ExperimentConfig(model=mixture, model_kind=kind, schedule=schedule,
                            reward_fn=reward_fn, reward_spec=reward_spec,
                            method=method, method_params=method_params,
                            seeds=seeds, output_dir=out, raw=raw)


def default_scenario(method: str, nfe_budget: int = 20000,
                     seeds=tuple(range(10)), output_dir=None) -> ExperimentConfig:
    """The benchmark scenario used for budget-matched method comparisons.

    An 8-mode ring mixture (radius 1, component variance 0.2) denoised over 50
    steps, rewarded by closeness to the circle x^2 + y^2 = 4 that lies in the
    tail of every mode: dense enough to be reachable, far enough that blind
    sampling rarely lands on it.
    """
    raw = {
        "model": {"kind": "diffusion_epsilon",
                  "mixture": {"ring": {"num_components": 8, "radius": 1.0,
                                       "variance": 0.2}}},
        "schedule": {"num_steps": 50, "beta_min": 0.002, "beta_max": 0.25,
                     "eta": 1.0},
        "reward": {"kind": "circle", "radius": 2.0},
        "method": method,
        method: {"nfe_budget": int(nfe_budget)},
        "seeds": [int(s) for s in seeds],
    }
    return config_from_dict(raw, name=f"default_{method}", output_dir=output_dir)
