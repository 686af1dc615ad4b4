"""Discrete location game on an n-by-n value grid.

Both sides claim cells; every grid cell sends its value to the claimed
location(s) nearest in Manhattan distance, splitting equally on ties.
Duplicate claims on one location count as distinct claimants, so the total
payout always equals the grid mass. Ordered k-tuples (repetition allowed)
are the action space; a brute-force oracle enumerates them on small
instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .core import DiscreteAction

__all__ = [
    "GridState",
    "LocationReward",
    "sample_grid",
    "opponent_cells",
    "reward",
    "reward_many",
    "reward_pair_exact",
    "brute_force_best",
    "cell_distance_matrix",
]

LocationReward = float

ENUMERATION_CAP = 2_000_000


@dataclass(frozen=True)
class GridState:
    """Value grid with side n; values are row-major, non-negative, sum to 1."""

    n: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"grid side must be positive, got {self.n}")
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if vals.size != self.n * self.n:
            raise ValueError(f"expected {self.n * self.n} values, got {vals.size}")
        if np.any(vals < 0.0):
            raise ValueError("grid values must be non-negative")
        if abs(float(vals.sum()) - 1.0) > 1e-9:
            raise ValueError(f"grid values must sum to 1, got {vals.sum()!r}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n_cells(self) -> int:
        return self.n * self.n


def sample_grid(n: int, alpha: float = 3.0, beta: float = 1.0, rng=None) -> GridState:
    """Grid of inverse-gamma(alpha, beta) draws, normalized to unit mass."""
    if n < 2:
        raise ValueError(f"grid side must be at least 2, got {n}")
    if alpha <= 0.0 or beta <= 0.0:
        raise ValueError("alpha and beta must be positive")
    if rng is None:
        raise ValueError("an explicit rng is required for reproducibility")
    draws = 1.0 / rng.gamma(alpha, 1.0 / beta, size=n * n)
    return GridState(n, draws / draws.sum())


def cell_distance_matrix(n: int) -> np.ndarray:
    """(n*n, n*n) integer Manhattan distances between row-major cells."""
    idx = np.arange(n * n)
    rows, cols = idx // n, idx % n
    return np.abs(rows[:, None] - rows[None, :]) + np.abs(cols[:, None] - cols[None, :])


def opponent_cells(state: GridState, k_opp: int) -> tuple[int, ...]:
    """The k_opp highest-valued cells, ties to the lowest row-major index."""
    if k_opp < 0 or k_opp > state.n_cells:
        raise ValueError(f"k_opp must be in [0, {state.n_cells}], got {k_opp}")
    order = np.argsort(-state.values, kind="stable")
    return tuple(int(c) for c in order[:k_opp])


def _check_cells(cells, n_cells: int) -> None:
    for c in cells:
        if not (0 <= int(c) < n_cells):
            raise ValueError(f"cell index {c} outside grid of {n_cells} cells")


def reward(state: GridState, player: DiscreteAction, opponent=()) -> float:
    """Player's share of grid mass under nearest-claimant assignment."""
    cells = np.asarray(player.cells, dtype=np.int64).reshape(1, -1)
    return float(reward_many(state.values, cells, opponent, n=state.n)[0])


def reward_many(values: np.ndarray, cells: np.ndarray, opponent=(), n: int | None = None) -> np.ndarray:
    """Rewards of many ordered tuples at once.

    values: (n*n,) one grid shared by all rows, or (B, n*n) one grid per row.
    cells:  (B, k) player tuples; opponent: shared cell list.
    """
    values = np.asarray(values, dtype=np.float64)
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim != 2:
        raise ValueError(f"cells must be (B, k), got shape {cells.shape}")
    n_cells = values.shape[-1]
    if n is None:
        n = int(round(np.sqrt(n_cells)))
    if n * n != n_cells:
        raise ValueError(f"value vector of length {n_cells} is not a square grid")
    _check_cells(cells.reshape(-1), n_cells)
    _check_cells(opponent, n_cells)

    dist = cell_distance_matrix(n)
    pdist = dist[cells]  # (B, k, n_cells)
    pmin = pdist.min(axis=1)  # (B, n_cells)
    if len(opponent) > 0:
        odist = dist[np.asarray(opponent, dtype=np.int64)]  # (k_opp, n_cells)
        omin = odist.min(axis=0)
        dmin = np.minimum(pmin, omin[None, :])
        o_cnt = (odist[None, :, :] == dmin[:, None, :]).sum(axis=1)
    else:
        dmin = pmin
        o_cnt = np.zeros_like(pmin)
    p_cnt = (pdist == dmin[:, None, :]).sum(axis=1)
    share = p_cnt / (p_cnt + o_cnt)
    if values.ndim == 1:
        return share @ values
    if values.shape[0] != cells.shape[0]:
        raise ValueError("per-row values must align with cells")
    return (share * values).sum(axis=1)


def reward_pair_exact(
    state: GridState, player_cells, opponent_cells_
) -> tuple[Fraction, Fraction]:
    """Both sides' rewards in exact rational arithmetic.

    Conservation (player + opponent == exact grid mass) holds as a Fraction
    identity here; the float path in `reward` matches to roundoff.
    """
    n = state.n
    dist = cell_distance_matrix(n)
    player_cells = [int(c) for c in player_cells]
    opp = [int(c) for c in opponent_cells_]
    _check_cells(player_cells + opp, state.n_cells)
    vals = [Fraction(float(v)) for v in state.values]
    p_total = Fraction(0)
    o_total = Fraction(0)
    for c in range(state.n_cells):
        dp = [dist[loc, c] for loc in player_cells]
        do = [dist[loc, c] for loc in opp]
        dmin = min(dp + do)
        p_cnt = sum(1 for d in dp if d == dmin)
        o_cnt = sum(1 for d in do if d == dmin)
        share = Fraction(vals[c], p_cnt + o_cnt)
        p_total += share * p_cnt
        o_total += share * o_cnt
    return p_total, o_total


def brute_force_best(
    state: GridState, k: int, opponent=(), cap: int = ENUMERATION_CAP
) -> tuple[DiscreteAction, float]:
    """Exhaustive maximizer over all ordered k-tuples (repetition allowed).

    Ties go to the lexicographically lowest tuple. Instances larger than
    `cap` tuples are rejected.
    """
    n_cells = state.n_cells
    total = n_cells**k
    if total > cap:
        raise ValueError(f"{total} tuples exceeds enumeration cap {cap}")
    tuples = np.array(list(product(range(n_cells), repeat=k)), dtype=np.int64)
    rewards = reward_many(state.values, tuples, opponent, n=state.n)
    best = int(np.argmax(rewards))  # argmax takes the first, which is lex-lowest
    return DiscreteAction(tuple(int(c) for c in tuples[best])), float(rewards[best])
