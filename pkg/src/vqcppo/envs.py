"""Continuous-control environments and observation wrappers.

Protocol: ``reset(seed=None) -> obs`` and
``step(action) -> (obs, reward, terminated, truncated)``; every environment
exposes its :class:`EnvSpec` as ``.spec``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericError
from .vqc import normalize_features


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    obs_bounds: tuple[tuple[float, float], ...]
    action_dim: int
    action_bounds: tuple[tuple[float, float], ...]
    max_episode_steps: int

    def __post_init__(self):
        for low, high in self.obs_bounds + self.action_bounds:
            if not (math.isfinite(low) and math.isfinite(high) and low < high):
                raise ConfigurationError(f"invalid bounds ({low}, {high})")
        if len(self.obs_bounds) != self.obs_dim or len(self.action_bounds) != self.action_dim:
            raise ConfigurationError("bounds do not match dimensions")


def angle_normalize(x: float) -> float:
    return ((x + math.pi) % (2 * math.pi)) - math.pi


class Pendulum:
    """Frictionless pendulum swing-up; angle 0 is upright."""

    max_speed = 8.0
    max_torque = 2.0
    dt = 0.05
    g = 10.0
    m = 1.0
    l = 1.0

    spec = EnvSpec(
        obs_dim=3,
        obs_bounds=((-1.0, 1.0), (-1.0, 1.0), (-8.0, 8.0)),
        action_dim=1,
        action_bounds=((-2.0, 2.0),),
        max_episode_steps=200,
    )

    def __init__(self, seed: int | None = None):
        self.rng = np.random.default_rng(seed)
        self.theta = 0.0
        self.omega = 0.0
        self.steps = 0

    def set_state(self, theta: float, omega: float) -> np.ndarray:
        self.theta, self.omega, self.steps = float(theta), float(omega), 0
        return self.observation()

    def observation(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), self.omega])

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.theta = float(self.rng.uniform(-math.pi, math.pi))
        self.omega = float(self.rng.uniform(-1.0, 1.0))
        self.steps = 0
        return self.observation()

    def step(self, action):
        u = float(np.asarray(action, dtype=float).reshape(-1)[0])
        if not math.isfinite(u):
            raise NumericError("non-finite torque")
        u = min(max(u, -self.max_torque), self.max_torque)
        th, om = self.theta, self.omega
        reward = -(angle_normalize(th) ** 2 + 0.1 * om**2 + 0.001 * u**2)
        om = om + (3 * self.g / (2 * self.l) * math.sin(th) + 3.0 / (self.m * self.l**2) * u) * self.dt
        om = min(max(om, -self.max_speed), self.max_speed)
        self.theta = th + om * self.dt
        self.omega = om
        self.steps += 1
        truncated = self.steps >= self.spec.max_episode_steps
        return self.observation(), reward, False, truncated

    def energy(self) -> float:
        # uniform rod about its pivot; zero potential at the hanging position
        inertia = self.m * self.l**2 / 3.0
        return 0.5 * inertia * self.omega**2 + self.m * self.g * self.l / 2.0 * (1.0 + math.cos(self.theta))


class Wrapper:
    def __init__(self, env):
        self.env = env
        self.spec = env.spec

    def observation(self, obs: np.ndarray) -> np.ndarray:
        return obs

    def reset(self, seed: int | None = None) -> np.ndarray:
        return self.observation(self.env.reset(seed))

    def step(self, action):
        obs, reward, terminated, truncated = self.env.step(action)
        return self.observation(obs), reward, terminated, truncated


class NormalizeObservation(Wrapper):
    """Map observations into [-pi/2, pi/2] per feature using declared bounds."""

    def __init__(self, env, bounds: Sequence[tuple[float, float]] | None = None):
        super().__init__(env)
        self.bounds = tuple(tuple(map(float, b)) for b in (bounds or env.spec.obs_bounds))
        half = math.pi / 2
        self.spec = replace(env.spec, obs_bounds=((-half, half),) * env.spec.obs_dim)

    def observation(self, obs):
        return normalize_features(obs, self.bounds)


class FeatureSelect(Wrapper):
    """Expose only ``indices`` of the wrapped observation, in the given order."""

    def __init__(self, env, indices: Sequence[int]):
        super().__init__(env)
        idx = [int(i) for i in indices]
        if not idx or len(set(idx)) != len(idx) or not all(0 <= i < env.spec.obs_dim for i in idx):
            raise ConfigurationError(f"invalid feature selection {indices} for {env.spec.obs_dim} features")
        self.indices = np.asarray(idx)
        self.spec = replace(
            env.spec, obs_dim=len(idx), obs_bounds=tuple(env.spec.obs_bounds[i] for i in idx)
        )

    def observation(self, obs):
        return np.asarray(obs)[self.indices]


def normalize_wrapper(env, bounds=None) -> NormalizeObservation:
    return NormalizeObservation(env, bounds)


def feature_select_wrapper(env, indices) -> FeatureSelect:
    return FeatureSelect(env, indices)


ENV_REGISTRY: dict[str, Callable[[], object]] = {"Pendulum-v1": Pendulum}


def register_env(name: str, factory: Callable[[], object]) -> None:
    ENV_REGISTRY[name] = factory


def make_env(name: str, normalize: bool = False, feature_indices: Sequence[int] | None = None):
    if name not in ENV_REGISTRY:
        raise ConfigurationError(f"unknown environment {name!r}; known: {sorted(ENV_REGISTRY)}")
    env = ENV_REGISTRY[name]()
    if feature_indices is not None:
        env = FeatureSelect(env, feature_indices)
    if normalize:
        env = NormalizeObservation(env)
    return env
