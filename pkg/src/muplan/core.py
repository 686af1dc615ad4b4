"""Action types, execution noise, seeding, and Monte Carlo action values.

Continuous actions live in normalized coordinates: velocity and angle are
both in [0, 1] and each environment maps them onto its physical ranges.
Execution noise perturbs those normalized coordinates with independent
zero-mean Gaussians and clamps back into the unit square; the discrete turn
component is never perturbed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

__all__ = [
    "ContinuousAction",
    "DiscreteAction",
    "ExecutionModel",
    "SampleSet",
    "Environment",
    "substream",
    "apply_execution_noise",
    "apply_execution_noise_batch",
    "q_value_monte_carlo",
]


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key) so parallel order never matters."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class ContinuousAction:
    """A shot: normalized velocity and angle in [0, 1], turn in {-1, +1}."""

    velocity: float
    angle: float
    turn: int = 1

    def __post_init__(self) -> None:
        if not (0.0 <= self.velocity <= 1.0):
            raise ValueError(f"velocity {self.velocity} outside [0, 1]")
        if not (0.0 <= self.angle <= 1.0):
            raise ValueError(f"angle {self.angle} outside [0, 1]")
        if self.turn not in (-1, 1):
            raise ValueError(f"turn must be -1 or +1, got {self.turn}")

    def as_array(self) -> np.ndarray:
        return np.array([self.velocity, self.angle], dtype=np.float64)


@dataclass(frozen=True)
class DiscreteAction:
    """An ordered tuple of claimed grid cells (flat row-major indices)."""

    cells: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.cells) == 0:
            raise ValueError("action must claim at least one cell")
        for c in self.cells:
            if not isinstance(c, (int, np.integer)) or c < 0:
                raise ValueError(f"cell indices must be non-negative ints, got {c!r}")
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))


@dataclass(frozen=True)
class ExecutionModel:
    """Gaussian execution noise on normalized (velocity, angle)."""

    sigma_velocity: float = 0.02
    sigma_angle: float = 0.02

    def __post_init__(self) -> None:
        if self.sigma_velocity < 0.0 or self.sigma_angle < 0.0:
            raise ValueError("noise widths must be non-negative")


class Environment(Protocol):
    """What planners and evaluators need from a game."""

    def reward(self, state, action) -> float: ...


def apply_execution_noise(
    action: ContinuousAction, model: ExecutionModel, rng: np.random.Generator
) -> ContinuousAction:
    """One noisy execution of `action`; coordinates are clamped to [0, 1]."""
    v = min(max(action.velocity + model.sigma_velocity * rng.standard_normal(), 0.0), 1.0)
    a = min(max(action.angle + model.sigma_angle * rng.standard_normal(), 0.0), 1.0)
    return ContinuousAction(v, a, action.turn)


def apply_execution_noise_batch(
    va: np.ndarray, model: ExecutionModel, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized noise for an (n, 2) array of normalized (velocity, angle) rows."""
    va = np.asarray(va, dtype=np.float64)
    noise = rng.standard_normal(va.shape)
    noise[:, 0] *= model.sigma_velocity
    noise[:, 1] *= model.sigma_angle
    return np.clip(va + noise, 0.0, 1.0)


class SampleSet:
    """Append-only (outcome, reward) pairs observed while planning one state.

    Outcomes are continuous actions as executed (post-noise). Array views are
    cached and rebuilt only when new pairs arrive, so kernel code can call
    `as_arrays` every iteration without quadratic copying.
    """

    __slots__ = ("_va", "_turn", "_reward", "_cache_n", "_arr_va", "_arr_turn", "_arr_r")

    def __init__(self, pairs: Iterable[tuple[ContinuousAction, float]] = ()) -> None:
        self._va: list[tuple[float, float]] = []
        self._turn: list[int] = []
        self._reward: list[float] = []
        self._cache_n = -1
        self._arr_va = np.empty((0, 2))
        self._arr_turn = np.empty(0)
        self._arr_r = np.empty(0)
        for outcome, r in pairs:
            self.append(outcome, r)

    def append(self, outcome: ContinuousAction, reward: float) -> None:
        self._va.append((outcome.velocity, outcome.angle))
        self._turn.append(outcome.turn)
        self._reward.append(float(reward))

    @classmethod
    def from_arrays(cls, va: np.ndarray, turn: np.ndarray, rewards: np.ndarray) -> "SampleSet":
        """Bulk constructor for (n, 2) coordinates, (n,) turns and rewards."""
        out = cls()
        va = np.asarray(va, dtype=np.float64)
        for i in range(va.shape[0]):
            out._va.append((float(va[i, 0]), float(va[i, 1])))
            out._turn.append(int(turn[i]))
            out._reward.append(float(rewards[i]))
        return out

    def __len__(self) -> int:
        return len(self._reward)

    def outcome(self, i: int) -> ContinuousAction:
        v, a = self._va[i]
        return ContinuousAction(v, a, self._turn[i])

    def reward_of(self, i: int) -> float:
        return self._reward[i]

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(n, 2) outcome coordinates, (n,) turns, (n,) rewards."""
        if self._cache_n != len(self._reward):
            self._arr_va = np.array(self._va, dtype=np.float64).reshape(len(self._va), 2)
            self._arr_turn = np.array(self._turn, dtype=np.float64)
            self._arr_r = np.array(self._reward, dtype=np.float64)
            self._cache_n = len(self._reward)
        return self._arr_va, self._arr_turn, self._arr_r


def q_value_monte_carlo(
    env,
    state,
    action,
    model: ExecutionModel,
    n: int,
    rng: np.random.Generator,
) -> float:
    """Mean reward of `action` over n noisy executions in `env`.

    Discrete actions have no execution noise, so their value is a single
    deterministic reward.
    """
    if n < 1:
        raise ValueError(f"need at least one execution, got n={n}")
    if isinstance(action, DiscreteAction):
        return float(env.reward(state, action))
    va = np.tile(action.as_array(), (n, 1))
    noisy = apply_execution_noise_batch(va, model, rng)
    turn = np.full(n, action.turn, dtype=np.float64)
    reward_batch = getattr(env, "reward_batch", None)
    if reward_batch is not None:
        rewards = np.asarray(reward_batch(state, noisy, turn), dtype=np.float64)
    else:
        rewards = np.array(
            [
                env.reward(state, ContinuousAction(noisy[i, 0], noisy[i, 1], action.turn))
                for i in range(n)
            ],
            dtype=np.float64,
        )
    return float(rewards.mean())
