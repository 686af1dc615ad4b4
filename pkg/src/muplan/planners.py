"""UCB and kernel-regression UCB planners over candidate action sets.

Both planners spend a fixed budget of one-shot executions on a single state.
UCB treats candidates as independent arms with empirical means; KR-UCB shares
every observed (outcome, reward) pair across candidates through kernel
regression, and can promote well-supported observed outcomes into new
candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ContinuousAction, ExecutionModel, SampleSet, apply_execution_noise
from .kernels import DENSITY_FLOOR, estimate_many, pairwise_weights

__all__ = [
    "ExpansionConfig",
    "PlannerStats",
    "PlannerResult",
    "ucb_select",
    "ucb_plan",
    "kr_ucb_select",
    "kr_ucb_plan",
]


@dataclass(frozen=True)
class ExpansionConfig:
    """KR-UCB candidate promotion: when the selected candidate's density is
    above `threshold`, the execution's observed outcome joins the candidate
    set, up to `cap` additions. An infinite threshold disables expansion."""

    threshold: float = 2.0
    cap: int = 64

    def __post_init__(self) -> None:
        if self.threshold <= 0.0:
            raise ValueError("expansion threshold must be positive")
        if self.cap < 0:
            raise ValueError("expansion cap must be non-negative")


@dataclass
class PlannerStats:
    """Per-candidate planning statistics.

    UCB fills counts/reward sums; KR-UCB additionally carries the shared
    sample set and per-candidate kernel densities.
    """

    candidates: list[ContinuousAction]
    counts: np.ndarray
    reward_sums: np.ndarray
    total: int
    c: float
    samples: SampleSet | None = None
    densities: np.ndarray | None = None

    @classmethod
    def fresh(cls, candidates, c: float, with_samples: bool = False) -> "PlannerStats":
        candidates = list(candidates)
        if not candidates:
            raise ValueError("need at least one candidate")
        n = len(candidates)
        return cls(
            candidates,
            np.zeros(n, dtype=np.int64),
            np.zeros(n, dtype=np.float64),
            0,
            float(c),
            SampleSet() if with_samples else None,
            np.zeros(n, dtype=np.float64) if with_samples else None,
        )


@dataclass
class PlannerResult:
    action: ContinuousAction
    index: int
    estimates: np.ndarray
    stats: PlannerStats
    log: list[tuple[int, int, float, float, int, float]] = field(default_factory=list)
    """(iteration, candidate index, outcome velocity, outcome angle, turn, reward)."""


def ucb_select(stats: PlannerStats) -> int:
    """Index maximizing mean + C*sqrt(log N / n); unvisited first, ties low."""
    counts = stats.counts
    unvisited = np.flatnonzero(counts == 0)
    if unvisited.size:
        return int(unvisited[0])
    log_n = math.log(stats.total)
    scores = stats.reward_sums / counts + stats.c * np.sqrt(log_n / counts)
    return int(np.argmax(scores))


def ucb_plan(
    env,
    state,
    candidates,
    budget: int,
    c: float,
    model: ExecutionModel,
    rng: np.random.Generator,
) -> PlannerResult:
    """Plain UCB over a fixed candidate set; one noisy execution per step.

    Recommends the highest empirical mean (ties: higher count, then lower
    index)."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    stats = PlannerStats.fresh(candidates, c)
    log = []
    for t in range(budget):
        i = ucb_select(stats)
        outcome = apply_execution_noise(stats.candidates[i], model, rng)
        r = float(env.reward(state, outcome))
        stats.counts[i] += 1
        stats.reward_sums[i] += r
        stats.total += 1
        log.append((t, i, outcome.velocity, outcome.angle, outcome.turn, r))
    means = np.where(stats.counts > 0, stats.reward_sums / np.maximum(stats.counts, 1), -np.inf)
    best = max(
        range(len(stats.candidates)),
        key=lambda i: (means[i], stats.counts[i], -i),
    )
    return PlannerResult(stats.candidates[best], best, means, stats, log)


def kr_ucb_select(
    candidates, samples: SampleSet, c: float, model: ExecutionModel
) -> int:
    """Index maximizing Q_hat + C*sqrt(log(max(total density, 1))/density);
    zero-density candidates first, ties by lowest index."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("need at least one candidate")
    if len(samples) == 0:
        return 0
    va = np.array([[a.velocity, a.angle] for a in candidates])
    turn = np.array([a.turn for a in candidates], dtype=np.float64)
    q, dens = estimate_many(va, turn, samples, model)
    return _kr_argmax_score(q, dens, c)


def _kr_argmax_score(q: np.ndarray, dens: np.ndarray, c: float) -> int:
    zero = dens < DENSITY_FLOOR
    if zero.any():
        return int(np.flatnonzero(zero)[0])
    log_total = math.log(max(float(dens.sum()), 1.0))
    scores = q + c * np.sqrt(log_total / dens)
    return int(np.argmax(scores))


def kr_ucb_plan(
    env,
    state,
    candidates,
    budget: int,
    c: float,
    model: ExecutionModel,
    expansion: ExpansionConfig | None,
    rng: np.random.Generator,
) -> PlannerResult:
    """KR-UCB with optional candidate expansion.

    Densities and weighted reward sums update incrementally (one kernel row
    or column per step), so a plan costs O(budget * candidates) kernel
    evaluations. Recommends the highest Q_hat among candidates with
    non-degenerate density (ties: higher density, then lower index)."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    cands = list(candidates)
    if not cands:
        raise ValueError("need at least one candidate")
    if expansion is None:
        expansion = ExpansionConfig(threshold=math.inf, cap=0)
    max_c = len(cands) + expansion.cap
    va = np.zeros((max_c, 2))
    turn = np.zeros(max_c)
    for i, a in enumerate(cands):
        va[i] = (a.velocity, a.angle)
        turn[i] = a.turn
    n_c = len(cands)

    out_va = np.zeros((budget, 2))
    out_turn = np.zeros(budget)
    rewards = np.zeros(budget)
    w_sum = np.zeros(max_c)
    wr_sum = np.zeros(max_c)
    counts = np.zeros(max_c, dtype=np.int64)

    samples = SampleSet()
    log = []
    for t in range(budget):
        if t == 0:
            i = 0
        else:
            dens = w_sum[:n_c]
            q = np.zeros(n_c)
            ok = dens >= DENSITY_FLOOR
            np.divide(wr_sum[:n_c], dens, out=q, where=ok)
            i = _kr_argmax_score(np.where(ok, q, 0.0), np.where(ok, dens, 0.0), c)
        density_at_selection = float(w_sum[i])
        counts[i] += 1

        outcome = apply_execution_noise(cands[i], model, rng)
        r = float(env.reward(state, outcome))
        samples.append(outcome, r)
        out_va[t] = (outcome.velocity, outcome.angle)
        out_turn[t] = outcome.turn
        rewards[t] = r
        col = pairwise_weights(
            va[:n_c], turn[:n_c], out_va[t : t + 1], out_turn[t : t + 1], model
        )[:, 0]
        w_sum[:n_c] += col
        wr_sum[:n_c] += col * r
        log.append((t, i, outcome.velocity, outcome.angle, outcome.turn, r))

        if n_c < max_c and density_at_selection > expansion.threshold:
            row = pairwise_weights(
                out_va[t : t + 1], out_turn[t : t + 1],
                out_va[: t + 1], out_turn[: t + 1], model,
            )[0]
            cands.append(outcome)
            va[n_c] = (outcome.velocity, outcome.angle)
            turn[n_c] = outcome.turn
            w_sum[n_c] = row.sum()
            wr_sum[n_c] = row @ rewards[: t + 1]
            n_c += 1

    dens = w_sum[:n_c]
    ok = dens >= DENSITY_FLOOR
    q = np.zeros(n_c)
    np.divide(wr_sum[:n_c], dens, out=q, where=ok)
    ranked = np.where(ok, q, -np.inf)
    best = max(range(n_c), key=lambda j: (ranked[j], dens[j], -j))
    stats = PlannerStats(
        cands, counts[:n_c].copy(), wr_sum[:n_c].copy(), budget, c, samples, dens.copy()
    )
    return PlannerResult(cands[best], best, np.where(ok, q, 0.0), stats, log)
