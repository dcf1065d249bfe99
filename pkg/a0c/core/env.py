"""
Environment
MDP contract used by the tree search and the Pendulum swing-up task
"""

import math
from dataclasses import dataclass
from typing import Protocol, Tuple, Union

import numpy as np

from a0c.exceptions import BoundsViolationError, SearchError


REWARD_SCALE = 1.0 / 1000.0


def wrap_angle(theta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Map angles to (-pi, pi]; a scalar comes back as a float"""
    wrapped = np.fmod(np.asarray(theta, dtype=np.float64) + math.pi, 2.0 * math.pi)
    wrapped = np.where(wrapped <= 0.0, wrapped + 2.0 * math.pi, wrapped) - math.pi
    return float(wrapped) if wrapped.ndim == 0 else wrapped


@dataclass(frozen=True)
class EnvState:
    """Full simulator state; immutable so tree nodes can share snapshots"""
    theta: float
    theta_dot: float
    step_count: int = 0


@dataclass(frozen=True)
class StepResult:
    """Outcome of one transition"""
    next_state: EnvState
    reward: float
    terminal: bool


class Environment(Protocol):
    """
    Deterministic, snapshot-based MDP.

    ``step`` must never mutate its input state: the tree search re-simulates
    from arbitrary interior nodes.
    """

    obs_dim: int
    n_a: int
    c_b: float
    horizon: int

    def reset(self, seed: int) -> EnvState: ...

    def step(self, state: EnvState, action: np.ndarray) -> StepResult: ...

    def observe(self, state: EnvState) -> np.ndarray: ...

    def is_terminal(self, state: EnvState) -> bool: ...


class PendulumEnv:
    """
    Pendulum swing-up with rescaled cost-shaped reward.

    Observation: ``(cos theta, sin theta, theta_dot)``; theta = 0 is upright.
    Action: torque in ``[-c_b, c_b]``.
    """

    obs_dim = 3
    n_a = 1

    def __init__(
        self,
        horizon: int = 300,
        c_b: float = 2.0,
        dt: float = 0.05,
        g: float = 10.0,
        m: float = 1.0,
        l: float = 1.0,
        max_speed: float = 8.0,
    ):
        self.horizon = horizon
        self.c_b = c_b
        self.dt = dt
        self.g = g
        self.m = m
        self.l = l
        self.max_speed = max_speed

    def reset(self, seed: int) -> EnvState:
        rng = np.random.default_rng(seed)
        theta = wrap_angle(float(rng.uniform(-math.pi, math.pi)))
        theta_dot = float(rng.uniform(-1.0, 1.0))
        return EnvState(theta=theta, theta_dot=theta_dot, step_count=0)

    def is_terminal(self, state: EnvState) -> bool:
        return state.step_count >= self.horizon

    def step(self, state: EnvState, action: np.ndarray) -> StepResult:
        """
        Semi-implicit Euler step.

        Raises:
            BoundsViolationError: action outside [-c_b, c_b]
            SearchError: stepping a terminal state
        """
        u_vec = np.asarray(action, dtype=np.float64).reshape(-1)
        if u_vec.shape != (self.n_a,) or not np.all(np.isfinite(u_vec)):
            raise BoundsViolationError("malformed action", f"got {action!r}")
        u = float(u_vec[0])
        if abs(u) > self.c_b:
            raise BoundsViolationError("torque out of bounds", f"|{u}| > {self.c_b}")
        if self.is_terminal(state):
            raise SearchError("cannot step a terminal state", f"step_count={state.step_count}")

        new_theta, new_theta_dot, reward = self.step_many(state.theta, state.theta_dot, u)
        next_state = EnvState(theta=float(new_theta), theta_dot=float(new_theta_dot), step_count=state.step_count + 1)
        return StepResult(
            next_state=next_state,
            reward=float(reward),
            terminal=self.is_terminal(next_state),
        )

    def step_many(self, theta, theta_dot, u) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Dynamics and reward for arrays of angles, velocities and torques.
        No bounds or horizon checks; ``step`` does those for a single state.

        Returns:
            (next theta, next theta_dot, reward)
        """
        theta = np.asarray(theta, dtype=np.float64)
        theta_dot = np.asarray(theta_dot, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        cost = wrap_angle(theta) ** 2 + 0.1 * theta_dot ** 2 + 0.001 * u ** 2

        theta_acc = 3.0 * self.g / (2.0 * self.l) * np.sin(theta) + 3.0 / (self.m * self.l ** 2) * u
        new_theta_dot = np.clip(theta_dot + theta_acc * self.dt, -self.max_speed, self.max_speed)
        new_theta = wrap_angle(theta + new_theta_dot * self.dt)
        return np.asarray(new_theta), new_theta_dot, -cost * REWARD_SCALE

    def observe(self, state: EnvState) -> np.ndarray:
        return np.array([math.cos(state.theta), math.sin(state.theta), state.theta_dot])
