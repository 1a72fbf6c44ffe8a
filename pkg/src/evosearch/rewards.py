"""Reward functions, fitness evaluation on denoised samples, and target diagnostics."""

from __future__ import annotations

import ast
import operator
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .models import GaussianMixture, log_density_p0
from .samplers import NfeLedger, TrajectoryHook, denoise_to_end
from .schedules import FlowTimeGrid, NoiseSchedule

_BIN_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY_OPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"abs": np.abs, "sqrt": np.sqrt, "exp": np.exp, "log": np.log,
          "sin": np.sin, "cos": np.cos}
_CONSTS = {"pi": np.pi, "e": np.e}


def compile_expression(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a small arithmetic expression over coordinates into a batch function.

    Coordinates are addressed as x0, x1, ... (with x, y aliases for x0, x1).
    Allowed: + - * / ** abs sqrt exp log sin cos, numeric constants, pi, e.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse reward expression {text!r}: {exc}") from None

    def check(node: ast.AST):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BIN_OPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY_OPS:
            check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                    and not node.keywords and len(node.args) == 1):
                raise ConfigurationError(
                    f"only single-argument calls to {sorted(_FUNCS)} are allowed")
            check(node.args[0])
        elif isinstance(node, ast.Name):
            name = node.id
            if name in _CONSTS or name in ("x", "y"):
                return
            if name.startswith("x") and name[1:].isdigit():
                return
            raise ConfigurationError(f"unknown name {name!r} in reward expression")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ConfigurationError(f"non-numeric constant {node.value!r}")
        else:
            raise ConfigurationError(
                f"disallowed syntax {type(node).__name__} in reward expression")

    check(tree)

    def evaluate(node: ast.AST, coords: np.ndarray):
        if isinstance(node, ast.Expression):
            return evaluate(node.body, coords)
        if isinstance(node, ast.BinOp):
            return _BIN_OPS[type(node.op)](evaluate(node.left, coords),
                                           evaluate(node.right, coords))
        if isinstance(node, ast.UnaryOp):
            return _UNARY_OPS[type(node.op)](evaluate(node.operand, coords))
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](evaluate(node.args[0], coords))
        if isinstance(node, ast.Name):
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            idx = {"x": 0, "y": 1}.get(node.id, None)
            if idx is None:
                idx = int(node.id[1:])
            if idx >= coords.shape[1]:
                raise ConfigurationError(
                    f"expression refers to coordinate {idx} but samples have "
                    f"dimension {coords.shape[1]}")
            return coords[:, idx]
        return node.value  # ast.Constant

    def fn(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(evaluate(tree, x), dtype=float),
                               (x.shape[0],)).copy()

    return fn


@dataclass(frozen=True)
class RewardFn:
    """Total reward function over clean samples; built via the factory helpers."""

    kind: str
    params: dict = field(default_factory=dict)
    _fn: Callable[[np.ndarray], np.ndarray] = None

    def __call__(self, x0: np.ndarray) -> np.ndarray:
        return self._fn(np.atleast_2d(x0))


def circle_reward(radius: float = 2.0) -> RewardFn:
    """r(x) = -| ||x||^2 - radius^2 |, maximal on the circle of the given radius."""
    r2 = float(radius) ** 2
    return RewardFn(kind="circle", params={"radius": float(radius)},
                    _fn=lambda x: -np.abs(np.sum(x * x, axis=1) - r2))


def radial_band_reward(center, radius: float, width: float) -> RewardFn:
    """1 inside the annulus | ||x - center|| - radius | < width, falling off linearly outside."""
    c = np.asarray(center, dtype=float)

    def fn(x):
        rho = np.linalg.norm(x - c[None, :], axis=1)
        return -np.maximum(np.abs(rho - radius) - width, 0.0)

    return RewardFn(kind="radial_band",
                    params={"center": c, "radius": float(radius), "width": float(width)},
                    _fn=fn)


def mixture_logdensity_reward(model: GaussianMixture) -> RewardFn:
    return RewardFn(kind="mixture_logdensity", params={},
                    _fn=lambda x: log_density_p0(model, x))


def expression_reward(text: str) -> RewardFn:
    return RewardFn(kind="custom_expression", params={"expression": text},
                    _fn=compile_expression(text))


def reward(fn: RewardFn, x0: np.ndarray, ledger: NfeLedger | None = None) -> np.ndarray:
    """Elementwise reward of a clean batch; increments reward_calls."""
    x0 = np.atleast_2d(x0)
    if ledger is not None:
        ledger.add_reward_calls(x0.shape[0])
    return fn(x0)


def fitness(x_t: np.ndarray, t: int, model: GaussianMixture,
            schedule: NoiseSchedule | FlowTimeGrid, fn: RewardFn,
            rng: np.random.Generator, ledger: NfeLedger | None = None,
            hooks: tuple[TrajectoryHook, ...] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Single-rollout fitness: denoise each particle once to x0, score r(x0).

    Returns (rewards, x0); the denoised batch doubles as the candidate outputs.
    """
    x0 = denoise_to_end(x_t, t, model, schedule, rng, ledger, hooks)
    return reward(fn, x0, ledger), x0


@dataclass(frozen=True)
class TargetDistribution:
    """Unnormalized reward-tilted target: log p0(x) + r(x) / alpha (Z never computed)."""

    base: GaussianMixture
    reward: RewardFn
    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")


def log_target_unnormalized(td: TargetDistribution, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return log_density_p0(td.base, x) + td.reward(x) / td.alpha
