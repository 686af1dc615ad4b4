"""Environment adapters with one shared surface.

Every environment exposes: sample_state(rng), encode(state) -> float vector,
encoded_size, and reward(state, action). Continuous environments add
reward_batch(state, va, turn) for vectorized noisy executions; the discrete
location game instead adds exact tuple rewards and a brute-force oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import curling, location
from .core import ContinuousAction, DiscreteAction

__all__ = ["CurlingEnv", "BumpEnv", "LocationEnv", "make_env"]


class CurlingEnv:
    """Hammer-shot decisions on the physics sheet; reward is the end score."""

    name = "curling"
    continuous = True

    def __init__(
        self,
        cfg: curling.SheetConfig | None = None,
        resolution: tuple[int, int] = (25, 50),
    ) -> None:
        self.cfg = cfg or curling.SheetConfig()
        self.resolution = tuple(resolution)
        curling._resolution_cells(self.cfg, self.resolution)

    @property
    def encoded_size(self) -> int:
        return curling.encoded_size(self.resolution)

    def sample_state(self, rng: np.random.Generator) -> curling.CurlingState:
        return curling.sample_hammer_state(self.cfg, rng)

    def encode(self, state: curling.CurlingState) -> np.ndarray:
        return curling.encode_state(state, self.cfg, self.resolution).ravel()

    def reward(self, state: curling.CurlingState, action: ContinuousAction) -> float:
        final = curling.simulate_shot(state, action, self.cfg)
        return float(curling.score(final, self.cfg))

    def reward_batch(self, state, va: np.ndarray, turn: np.ndarray) -> np.ndarray:
        """Scores of many noisy shot executions from one state."""
        cfg = self.cfg
        curling.validate_state(state, cfg)
        va = np.asarray(va, dtype=np.float64)
        n = len(state.stones) + 1
        base_pos = np.zeros((n, 2))
        team = np.empty(n, dtype=np.int64)
        for i, s in enumerate(state.stones):
            base_pos[i] = (s.x, s.y)
            team[i] = s.team
        team[n - 1] = curling.HAMMER
        lo, hi = cfg.velocity_range
        alo, ahi = cfg.angle_range
        house_r2 = cfg.house_score_radius**2
        out = np.empty(va.shape[0])
        vel = np.zeros((n, 2))
        spin = np.zeros(n)
        for b in range(va.shape[0]):
            speed = lo + va[b, 0] * (hi - lo)
            phi = alo + va[b, 1] * (ahi - alo)
            pos = base_pos.copy()
            vel[:] = 0.0
            vel[n - 1, 0] = speed * math.sin(phi)
            vel[n - 1, 1] = speed * math.cos(phi)
            spin[:n - 1] = 0.0
            spin[n - 1] = float(turn[b])
            alive = np.ones(n, dtype=np.uint8)
            curling._simulate_arrays(pos, vel, spin, alive, cfg)
            out[b] = _score_arrays(pos, team, alive, cfg.house_y, house_r2)
        return out

    def state_records(self, state: curling.CurlingState) -> list[list]:
        return [[s.team, s.x, s.y] for s in state.stones]

    def state_from_records(self, records) -> curling.CurlingState:
        return curling.CurlingState(
            tuple(curling.Stone(float(x), float(y), int(t)) for t, x, y in records)
        )


def _score_arrays(pos, team, alive, house_y, house_r2) -> float:
    best0 = math.inf
    best1 = math.inf
    d0 = []
    d1 = []
    for i in range(pos.shape[0]):
        if not alive[i]:
            continue
        d2 = pos[i, 0] ** 2 + (pos[i, 1] - house_y) ** 2
        if d2 > house_r2:
            continue
        if team[i] == curling.HAMMER:
            d0.append(d2)
            best0 = min(best0, d2)
        else:
            d1.append(d2)
            best1 = min(best1, d2)
    s0 = sum(1 for d in d0 if d < best1)
    s1 = sum(1 for d in d1 if d < best0)
    return float(s0 - s1)


@dataclass(frozen=True)
class BumpState:
    cx: float
    cy: float


class BumpEnv:
    """Synthetic smooth surface: one Gaussian bump per state, peak 1.

    The state encodes the bump center directly, so nets can learn to place
    actions on it; handy for optimization sanity checks without physics.
    """

    name = "bump"
    continuous = True

    def __init__(self, width: float = 0.15, center: tuple[float, float] | None = None):
        if width <= 0.0:
            raise ValueError("width must be positive")
        self.width = width
        self.center = center

    encoded_size = 2

    def sample_state(self, rng: np.random.Generator) -> BumpState:
        if self.center is not None:
            return BumpState(*self.center)
        return BumpState(float(rng.uniform(0.15, 0.85)), float(rng.uniform(0.15, 0.85)))

    def encode(self, state: BumpState) -> np.ndarray:
        return np.array([state.cx, state.cy])

    def surface_max(self, state: BumpState) -> float:
        return 1.0

    def reward(self, state: BumpState, action: ContinuousAction) -> float:
        return float(
            self.reward_batch(state, action.as_array()[None, :], np.array([action.turn]))[0]
        )

    def reward_batch(self, state: BumpState, va: np.ndarray, turn) -> np.ndarray:
        va = np.asarray(va, dtype=np.float64)
        d2 = (va[:, 0] - state.cx) ** 2 + (va[:, 1] - state.cy) ** 2
        return np.exp(-d2 / (2.0 * self.width**2))

    def state_records(self, state: BumpState) -> list:
        return [state.cx, state.cy]

    def state_from_records(self, records) -> BumpState:
        cx, cy = records
        return BumpState(float(cx), float(cy))


class LocationEnv:
    """Location game instance: grid size, player tuple length, opponent size."""

    name = "location"
    continuous = False

    def __init__(
        self,
        n: int = 5,
        k: int = 2,
        k_opp: int = 1,
        alpha: float = 3.0,
        beta: float = 1.0,
    ) -> None:
        if k < 1:
            raise ValueError("player must claim at least one cell")
        self.n = n
        self.k = k
        self.k_opp = k_opp
        self.alpha = alpha
        self.beta = beta

    @property
    def encoded_size(self) -> int:
        return self.n * self.n

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    def sample_state(self, rng: np.random.Generator) -> location.GridState:
        return location.sample_grid(self.n, self.alpha, self.beta, rng)

    def encode(self, state: location.GridState) -> np.ndarray:
        return state.values

    def opponent(self, state: location.GridState) -> tuple[int, ...]:
        return location.opponent_cells(state, self.k_opp)

    def reward(self, state: location.GridState, action: DiscreteAction) -> float:
        return location.reward(state, action, self.opponent(state))

    def reward_cells(self, state: location.GridState, cells: np.ndarray) -> np.ndarray:
        """Rewards of a (B, k) batch of tuples against this state's opponent."""
        return location.reward_many(state.values, cells, self.opponent(state), n=state.n)

    def oracle(self, state: location.GridState) -> tuple[DiscreteAction, float]:
        return location.brute_force_best(state, self.k, self.opponent(state))

    def state_records(self, state: location.GridState) -> list:
        return [float(v) for v in state.values]

    def state_from_records(self, records) -> location.GridState:
        return location.GridState(self.n, np.asarray(records, dtype=np.float64))


def make_env(environment: str, options: dict | None = None):
    """Build an environment from its config name and option mapping."""
    options = dict(options or {})
    if environment == "curling":
        sheet = options.pop("sheet", {})
        resolution = tuple(options.pop("resolution", (25, 50)))
        if options:
            raise ValueError(f"unknown curling options: {sorted(options)}")
        return CurlingEnv(curling.SheetConfig(**sheet), resolution)
    if environment == "bump":
        return BumpEnv(**options)
    if environment == "location":
        return LocationEnv(**options)
    raise ValueError(f"unknown environment {environment!r}")
