"""Reverse-time sampling primitives with NFE accounting and state-caching hooks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigurationError, ScheduleError
from .models import GaussianMixture, epsilon_pred, flow_params, score, velocity
from .schedules import FlowTimeGrid, NoiseSchedule


@dataclass
class NfeLedger:
    """Counters of denoiser evaluations (the reported NFE) and reward evaluations."""

    model_calls: int = 0
    reward_calls: int = 0

    def add_model_calls(self, n: int):
        self.model_calls += n

    def add_reward_calls(self, n: int):
        self.reward_calls += n


@dataclass(frozen=True)
class TrajectoryHook:
    """Callback fired once per listed step index during a denoise run.

    The callback receives (step index, particle batch) and must not mutate the
    batch; the batch is handed over as a read-only view.
    """

    times: frozenset = field(default_factory=frozenset)
    callback: Callable[[int, np.ndarray], None] = lambda t, x: None


def _readonly(x: np.ndarray) -> np.ndarray:
    view = x.view()
    view.flags.writeable = False
    return view


def ddim_sde_step(x_t: np.ndarray, t: int, eps_hat: np.ndarray,
                  schedule: NoiseSchedule, rng: np.random.Generator,
                  ledger: NfeLedger | None = None) -> np.ndarray:
    """One stochastic DDIM-family step t -> t-1.

    x_{t-1} = sqrt(abar_{t-1}) x0_hat + sqrt(1 - abar_{t-1} - sigma_t^2) eps_hat
              + sigma_t xi,  xi ~ N(0, I),
    with x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).

    The eps_hat evaluation is attributed here: model_calls += batch size.
    """
    if t < 1:
        raise ScheduleError(f"ddim_sde_step requires t >= 1, got {t}")
    a = schedule.alpha_bar[t]
    ap = schedule.alpha_bar[t - 1]
    sig = schedule.sigma(t)
    rad = 1.0 - ap - sig * sig
    if rad < -1e-12:
        raise ScheduleError(f"negative radicand 1 - alpha_bar[{t - 1}] - sigma^2 = {rad}")
    rad = max(rad, 0.0)
    x0_hat = (x_t - np.sqrt(1.0 - a) * eps_hat) / np.sqrt(a)
    out = np.sqrt(ap) * x0_hat + np.sqrt(rad) * eps_hat + sig * rng.standard_normal(x_t.shape)
    if ledger is not None:
        ledger.add_model_calls(x_t.shape[0])
    return out


def flow_ode_step(x_s: np.ndarray, s: float, s_next: float, u: np.ndarray,
                  ledger: NfeLedger | None = None) -> np.ndarray:
    """Euler step of the flow ODE: x_{s_next} = x_s - u (s - s_next)."""
    if not 1.0 >= s > s_next >= 0.0:
        raise ScheduleError(f"need 1 >= s > s_next >= 0, got s={s}, s_next={s_next}")
    if ledger is not None:
        ledger.add_model_calls(x_s.shape[0])
    return x_s - u * (s - s_next)


def flow_sde_step(x_s: np.ndarray, s: float, s_next: float, u: np.ndarray,
                  score_s: np.ndarray, sigma_s: float, rng: np.random.Generator,
                  ledger: NfeLedger | None = None) -> np.ndarray:
    """Euler-Maruyama step of the marginal-preserving flow SDE.

    With delta = s - s_next:
    x_{s_next} = x_s - [u - (sigma_s^2 / 2) score_s] delta + sigma_s sqrt(delta) xi.
    sigma_s = 0 reproduces flow_ode_step bit-for-bit.
    """
    if not 1.0 >= s > s_next >= 0.0:
        raise ScheduleError(f"need 1 >= s > s_next >= 0, got s={s}, s_next={s_next}")
    if sigma_s < 0:
        raise ScheduleError(f"sigma_s must be >= 0, got {sigma_s}")
    if sigma_s == 0.0:
        return flow_ode_step(x_s, s, s_next, u, ledger)
    delta = s - s_next
    drift = u - 0.5 * sigma_s * sigma_s * score_s
    out = x_s - drift * delta + sigma_s * np.sqrt(delta) * rng.standard_normal(x_s.shape)
    if ledger is not None:
        ledger.add_model_calls(x_s.shape[0])
    return out


def score_from_velocity(u: np.ndarray, x: np.ndarray, s: float) -> np.ndarray:
    """Score of the flow marginal from the velocity.

    Under the linear path, E[eps | x_s] = (1 - s) u + x and
    grad log p_s(x) = -E[eps | x_s] / s.  Rejects s = 0.
    """
    if not 0.0 < s <= 1.0:
        raise ConfigurationError(f"score_from_velocity requires s in (0, 1], got {s}")
    return -((1.0 - s) * u + x) / s


def _fire_hooks(hooks: Iterable[TrajectoryHook], t: int, x: np.ndarray):
    for hook in hooks:
        if t in hook.times:
            hook.callback(t, _readonly(x))


def denoise_to_end(x_start: np.ndarray, t_start: int, model: GaussianMixture,
                   schedule: NoiseSchedule | FlowTimeGrid,
                   rng: np.random.Generator,
                   ledger: NfeLedger | None = None,
                   hooks: Iterable[TrajectoryHook] = ()) -> np.ndarray:
    """Run the appropriate stepper from step t_start down to 0.

    Hooks fire while the batch sits at each listed step (including t_start and
    0 when listed).  Returns the clean batch; ledger gains batch_size * t_start
    model calls.
    """
    hooks = tuple(hooks)
    for hook in hooks:
        if any(t < 0 or t > t_start for t in hook.times):
            raise ConfigurationError(
                f"hook times {sorted(hook.times)} outside [0, {t_start}]")
    x = np.array(x_start, dtype=float, copy=True)
    if t_start == 0:
        _fire_hooks(hooks, 0, x)
        return x
    if t_start > schedule.num_steps:
        raise ConfigurationError(
            f"t_start {t_start} exceeds schedule num_steps {schedule.num_steps}")
    is_flow = isinstance(schedule, FlowTimeGrid)
    for t in range(t_start, 0, -1):
        _fire_hooks(hooks, t, x)
        if is_flow:
            s, s_next = schedule.s_of(t), schedule.s_of(t - 1)
            u = velocity(model, x, s)
            sig = schedule.sigma_at(t)
            if sig > 0:
                sc = score_from_velocity(u, x, s)
                x = flow_sde_step(x, s, s_next, u, sc, sig, rng, ledger)
            else:
                x = flow_ode_step(x, s, s_next, u, ledger)
        else:
            eps_hat = epsilon_pred(model, x, schedule, t)
            x = ddim_sde_step(x, t, eps_hat, schedule, rng, ledger)
    _fire_hooks(hooks, 0, x)
    return x


def denoise_one_step(x: np.ndarray, t: int, model: GaussianMixture,
                     schedule: NoiseSchedule | FlowTimeGrid,
                     rng: np.random.Generator,
                     ledger: NfeLedger | None = None) -> np.ndarray:
    """Advance a batch a single step t -> t-1 under the active sampler."""
    if isinstance(schedule, FlowTimeGrid):
        s, s_next = schedule.s_of(t), schedule.s_of(t - 1)
        u = velocity(model, x, s)
        sig = schedule.sigma_at(t)
        if sig > 0:
            sc = score_from_velocity(u, x, s)
            return flow_sde_step(x, s, s_next, u, sc, sig, rng, ledger)
        return flow_ode_step(x, s, s_next, u, ledger)
    eps_hat = epsilon_pred(model, x, schedule, t)
    return ddim_sde_step(x, t, eps_hat, schedule, rng, ledger)


def mutation_scale(schedule: NoiseSchedule | FlowTimeGrid, t: int) -> float:
    """Per-step injected-noise scale sigma_t used by intermediate-state mutation.

    Diffusion: sigma_t of the stochastic sampler.  Flow: sigma_s sqrt(delta_s),
    the noise magnitude the Euler-Maruyama step injects at step t.
    """
    if isinstance(schedule, FlowTimeGrid):
        delta = schedule.s_of(t) - schedule.s_of(t - 1)
        return schedule.sigma_at(t) * np.sqrt(delta)
    return schedule.sigma(t)
