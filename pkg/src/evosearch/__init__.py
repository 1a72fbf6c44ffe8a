"""Evolutionary test-time search over diffusion/flow denoising trajectories."""

from .baselines import (ParticleSamplingConfig, best_of_n, particle_sampling,
                        posterior_mean_x0, resample)
from .errors import ConfigurationError, ScheduleError
from .metrics import CoverageSpec, angular_coverage, diversity_l2, reward_summary
from .models import (GaussianMixture, ModelKind, diffused_params, epsilon_pred,
                     flow_params, log_density_p0, ring_mixture, sample_prior,
                     score, velocity)
from .rewards import (RewardFn, TargetDistribution, circle_reward,
                      expression_reward, fitness, log_target_unnormalized,
                      mixture_logdensity_reward, radial_band_reward, reward)
from .samplers import (NfeLedger, TrajectoryHook, ddim_sde_step, denoise_to_end,
                       flow_ode_step, flow_sde_step, score_from_velocity)
from .schedules import (EvolutionSchedule, FlowTimeGrid, NoiseSchedule,
                        PopulationSchedule, make_flow_grid, make_linear_schedule,
                        uniform_evolution_schedule, validate_schedules)
from .search import (EvoConfig, PopulationLedger, RewardLedger, SearchResult,
                     evosearch_generation, evosearch_run, mutate_initial_noise,
                     mutate_intermediate, running_best, tournament_select)

__all__ = [name for name in dir() if not name.startswith("_")]
