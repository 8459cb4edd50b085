"""Desk-scale continuous-control environments with [-1, 1]^D actions.

Both environments are deterministic given their reset rng and run on a fixed
horizon of 200 steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HORIZON = 200

ENV_SPECS = {
    "pointmass": {"obs_dim": 4, "act_dim": 2},
    "pendulum": {"obs_dim": 3, "act_dim": 1},
}


@dataclass
class ToyEnv:
    kind: str
    state: np.ndarray | None = None
    goal: np.ndarray | None = None
    steps: int = 0
    horizon: int = HORIZON

    def __post_init__(self):
        if self.kind not in ENV_SPECS:
            raise ValueError(f"unknown env kind {self.kind!r}")

    @property
    def obs_dim(self) -> int:
        return ENV_SPECS[self.kind]["obs_dim"]

    @property
    def act_dim(self) -> int:
        return ENV_SPECS[self.kind]["act_dim"]

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.steps = 0
        if self.kind == "pointmass":
            self.state = rng.uniform(-0.5, 0.5, size=2)
            self.goal = rng.uniform(-0.5, 0.5, size=2)
        else:
            theta = rng.uniform(-math.pi, math.pi)
            theta_dot = rng.uniform(-1.0, 1.0)
            self.state = np.array([theta, theta_dot])
        return self.observe()

    def observe(self) -> np.ndarray:
        if self.kind == "pointmass":
            # Position plus goal error; the error form keeps the near-goal
            # policy close to linear in the observation.
            return np.concatenate([self.state, self.goal - self.state])
        theta, theta_dot = self.state
        return np.array([math.cos(theta), math.sin(theta), theta_dot])


def env_step(env: ToyEnv, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Advance one step; raises on out-of-bounds actions."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (env.act_dim,):
        raise ValueError("action dimension mismatch")
    if np.any(np.abs(action) > 1.0 + 1e-9):
        raise ValueError("action outside [-1, 1]")
    if env.kind == "pointmass":
        # The arena is clipped so observations and rewards stay bounded even
        # under long random-action stretches.
        env.state = np.clip(env.state + 0.05 * action, -1.0, 1.0)
        reward = -float(np.linalg.norm(env.state - env.goal))
    else:
        # Standard swing-up dynamics: g=10, m=1, l=1, torque scale 2, dt=0.05.
        theta, theta_dot = env.state
        torque = 2.0 * float(action[0])
        theta_dot = theta_dot + (3.0 * 10.0 / 2.0 * math.sin(theta) + 3.0 * torque) * 0.05
        theta_dot = float(np.clip(theta_dot, -8.0, 8.0))
        theta = theta + theta_dot * 0.05
        env.state = np.array([theta, theta_dot])
        theta_norm = ((theta + math.pi) % (2.0 * math.pi)) - math.pi
        reward = -(theta_norm ** 2 + 0.1 * theta_dot ** 2 + 0.001 * float(action[0]) ** 2)
    env.steps += 1
    done = env.steps >= env.horizon
    return env.observe(), reward, done
