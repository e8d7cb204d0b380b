"""
Toy continuous-control environments.

Dynamics are pure functions of (state, action); an `EnvState` carries the
physical state, the step counter and the generator used for resets. The
`ToyEnv` classes wrap those functions with the mutable reset/step interface the
training loop needs.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np


logger = logging.getLogger(__name__)


class UnknownEnvironmentError(ValueError):
    """Raised for env names missing from the registry."""


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    horizon: int
    physics: dict[str, float] = field(default_factory=dict)
    action_low: float = -1.0
    action_high: float = 1.0

    def __post_init__(self):
        if self.act_dim < 1 or self.horizon < 1:
            raise ValueError("env needs act_dim >= 1 and horizon >= 1")


@dataclass
class EnvState:
    physical: np.ndarray
    step_count: int = 0
    rng: np.random.Generator | None = None


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    truncated: bool
    clamped: bool = False

    @property
    def terminal(self) -> bool:
        """True only for real terminations; horizon cut-offs bootstrap."""
        return self.done and not self.truncated


PENDULUM = EnvSpec(
    name="pendulum",
    obs_dim=3,
    act_dim=1,
    horizon=200,
    physics={"g": 10.0, "m": 1.0, "l": 1.0, "dt": 0.05, "max_torque": 2.0, "max_speed": 8.0},
)

POINTMASS = EnvSpec(
    name="pointmass",
    obs_dim=6,
    act_dim=2,
    horizon=100,
    physics={"dt": 0.1, "thrust": 2.0, "drag": 0.1, "max_speed": 3.0, "arena": 2.0, "spawn": 1.0},
)


def _clamp_action(action: np.ndarray | float, spec: EnvSpec) -> tuple[np.ndarray, bool]:
    a = np.asarray(action, dtype=np.float64).reshape(spec.act_dim)
    clipped = np.clip(a, spec.action_low, spec.action_high)
    return clipped, bool(np.any(clipped != a))


def angle_normalize(x: float) -> float:
    return ((x + math.pi) % (2.0 * math.pi)) - math.pi


# Pendulum swing-up, angle 0 is upright


def pendulum_reset(
    rng: np.random.Generator,
    start: tuple[float, float] | None = None,
    spec: EnvSpec = PENDULUM,
) -> EnvState:
    if start is None:
        start = (rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0))
    return EnvState(physical=np.array(start, dtype=np.float64), step_count=0, rng=rng)


def pendulum_observe(state: EnvState) -> np.ndarray:
    theta, theta_dot = state.physical
    return np.array([math.cos(theta), math.sin(theta), theta_dot])


def pendulum_step(
    state: EnvState, action: np.ndarray | float, spec: EnvSpec = PENDULUM
) -> tuple[EnvState, StepResult]:
    p = spec.physics
    a, clamped = _clamp_action(action, spec)
    torque = p["max_torque"] * float(a[0])
    theta, theta_dot = state.physical
    reward = -(angle_normalize(theta) ** 2 + 0.1 * theta_dot**2 + 0.001 * torque**2)

    accel = 3.0 * p["g"] / (2.0 * p["l"]) * math.sin(theta) + 3.0 / (p["m"] * p["l"] ** 2) * torque
    theta_dot = float(np.clip(theta_dot + accel * p["dt"], -p["max_speed"], p["max_speed"]))
    theta = theta + theta_dot * p["dt"]

    nxt = replace(state, physical=np.array([theta, theta_dot]), step_count=state.step_count + 1)
    done = nxt.step_count >= spec.horizon
    return nxt, StepResult(pendulum_observe(nxt), reward, done, truncated=done, clamped=clamped)


def energy_pumping_policy(obs: np.ndarray) -> np.ndarray:
    """Scripted swing-up: pump energy with bang-bang torque, brake near the top."""
    cos_t, sin_t, theta_dot = obs
    theta = math.atan2(sin_t, cos_t)
    if cos_t > 0.9:
        return np.array([float(np.clip(-(4.0 * theta + 1.0 * theta_dot), -1.0, 1.0))])
    energy = 0.5 * theta_dot**2 + 15.0 * cos_t
    if energy >= 15.0:
        return np.array([0.0])
    return np.array([1.0 if theta_dot >= 0 else -1.0])


# Point mass reaching a goal in the plane


def pointmass_reset(
    rng: np.random.Generator,
    start: tuple[np.ndarray, np.ndarray] | None = None,
    spec: EnvSpec = POINTMASS,
) -> EnvState:
    spawn = spec.physics["spawn"]
    if start is None:
        pos = rng.uniform(-spawn, spawn, size=2)
        goal = rng.uniform(-spawn, spawn, size=2)
    else:
        pos, goal = (np.asarray(v, dtype=np.float64) for v in start)
    physical = np.concatenate([pos, np.zeros(2), goal])
    return EnvState(physical=physical, step_count=0, rng=rng)


def pointmass_observe(state: EnvState) -> np.ndarray:
    pos, vel, goal = state.physical[:2], state.physical[2:4], state.physical[4:]
    return np.concatenate([pos, vel, goal - pos])


def pointmass_step(
    state: EnvState, action: np.ndarray, spec: EnvSpec = POINTMASS
) -> tuple[EnvState, StepResult]:
    p = spec.physics
    a, clamped = _clamp_action(action, spec)
    pos, vel, goal = state.physical[:2], state.physical[2:4], state.physical[4:]
    vel = np.clip(vel + (p["thrust"] * a - p["drag"] * vel) * p["dt"], -p["max_speed"], p["max_speed"])
    pos = np.clip(pos + vel * p["dt"], -p["arena"], p["arena"])
    reward = -float(np.linalg.norm(pos - goal))

    nxt = replace(state, physical=np.concatenate([pos, vel, goal]), step_count=state.step_count + 1)
    done = nxt.step_count >= spec.horizon
    return nxt, StepResult(pointmass_observe(nxt), reward, done, truncated=done, clamped=clamped)


def thrust_to_goal_policy(obs: np.ndarray) -> np.ndarray:
    """Scripted reach: full thrust along the goal direction."""
    offset = obs[4:6]
    dist = float(np.linalg.norm(offset))
    if dist < 1e-12:
        return np.zeros(2)
    return offset / dist


# Stateful wrappers


class ToyEnv:
    """Mutable reset/step facade over the pure dynamics."""

    spec: EnvSpec
    _reset_fn: Callable[..., EnvState]
    _step_fn: Callable[[EnvState, np.ndarray], tuple[EnvState, StepResult]]
    _observe_fn: Callable[[EnvState], np.ndarray]

    def __init__(self, seed: int | np.random.SeedSequence | None = None):
        self.rng = np.random.default_rng(seed)
        self.state: EnvState | None = None
        self.clamp_count = 0

    def reset(self, start: object = None) -> np.ndarray:
        self.state = type(self)._reset_fn(self.rng, start)
        return type(self)._observe_fn(self.state)

    def step(self, action: np.ndarray) -> StepResult:
        if self.state is None:
            raise RuntimeError("step() called before reset()")
        if self.state.step_count >= self.spec.horizon:
            raise RuntimeError(f"episode already reached its horizon of {self.spec.horizon}")
        self.state, result = type(self)._step_fn(self.state, action)
        if result.clamped:
            self.clamp_count += 1
            logger.debug("%s: action %s clamped to bounds", self.spec.name, action)
        return result


class PendulumEnv(ToyEnv):
    spec = PENDULUM
    _reset_fn = staticmethod(pendulum_reset)
    _step_fn = staticmethod(pendulum_step)
    _observe_fn = staticmethod(pendulum_observe)


class PointMassEnv(ToyEnv):
    spec = POINTMASS
    _reset_fn = staticmethod(pointmass_reset)
    _step_fn = staticmethod(pointmass_step)
    _observe_fn = staticmethod(pointmass_observe)


ENVIRONMENTS: dict[str, type[ToyEnv]] = {"pendulum": PendulumEnv, "pointmass": PointMassEnv}


def make_env(name: str, seed: int | np.random.SeedSequence | None = None) -> ToyEnv:
    try:
        return ENVIRONMENTS[name](seed)
    except KeyError:
        known = ", ".join(sorted(ENVIRONMENTS))
        raise UnknownEnvironmentError(f"unknown env {name!r} (known: {known})") from None


def rollout_return(env: ToyEnv, policy: Callable[[np.ndarray], np.ndarray], start: object = None) -> float:
    """Total reward of one full-horizon episode under a scripted policy."""
    obs = env.reset(start)
    total = 0.0
    while True:
        result = env.step(policy(obs))
        total += result.reward
        obs = result.obs
        if result.done:
            return total
