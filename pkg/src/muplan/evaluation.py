"""Evaluation protocol: budget sweeps, confidence intervals, coverage maps.

Continuous generators are scored by planning over their candidates on each
test state and Monte Carlo scoring the recommended action; discrete
generators sample one action per head and keep the best exact reward. Every
per-state computation draws from an indexed substream of the master seed,
so reports reproduce bit for bit regardless of worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ExecutionModel, q_value_monte_carlo, substream
from .planners import ExpansionConfig, kr_ucb_plan, ucb_plan

__all__ = [
    "EvalRow",
    "EvalReport",
    "evaluate_continuous",
    "evaluate_discrete",
    "coverage_analysis",
    "bhattacharyya_overlap",
    "mean_pairwise_overlap",
    "diversity_metric",
    "write_report_csv",
    "write_coverage_csv",
]

REPORT_COLUMNS = ("generator", "objective", "planner", "budget", "m", "mean", "ci", "n_states")


@dataclass(frozen=True)
class EvalRow:
    generator: str
    objective: str
    planner: str
    budget: int
    m: int
    mean: float
    ci: float
    n_states: int
    scores: np.ndarray

    @classmethod
    def from_scores(cls, scores: np.ndarray, **labels) -> "EvalRow":
        scores = np.asarray(scores, dtype=np.float64)
        n = scores.size
        std = float(scores.std(ddof=1)) if n > 1 else 0.0
        return cls(
            mean=float(scores.mean()),
            ci=float(1.96 * std / np.sqrt(n)),
            n_states=n,
            scores=scores,
            **labels,
        )


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    oracle_mean: float | None = None
    oracle_scores: np.ndarray | None = None

    def extend(self, other: "EvalReport") -> None:
        self.rows.extend(other.rows)
        if other.oracle_mean is not None:
            self.oracle_mean = other.oracle_mean
            self.oracle_scores = other.oracle_scores


def evaluate_continuous(
    env,
    generator,
    planner: str,
    states,
    budget: int,
    c: float,
    model: ExecutionModel,
    eval_samples: int = 1000,
    seed: int = 0,
    expansion: ExpansionConfig | None = None,
    threads: int = 1,
    generator_name: str = "net",
    objective: str = "",
    m: int | None = None,
) -> EvalReport:
    """One (generator, planner, budget) sweep point over shared test states."""
    states = list(states)
    if not states:
        raise ValueError("need at least one test state")
    if planner not in ("ucb", "kr_ucb"):
        raise ValueError(f"unknown planner {planner!r}")

    def run(i: int) -> float:
        state = states[i]
        candidates = generator(state)
        plan_rng = substream(seed, 10, i)
        if planner == "ucb":
            result = ucb_plan(env, state, candidates, budget, c, model, plan_rng)
        else:
            result = kr_ucb_plan(env, state, candidates, budget, c, model, expansion, plan_rng)
        return q_value_monte_carlo(
            env, state, result.action, model, eval_samples, substream(seed, 11, i)
        )

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            scores = np.array(list(pool.map(run, range(len(states)))))
    else:
        scores = np.array([run(i) for i in range(len(states))])
    row = EvalRow.from_scores(
        scores,
        generator=generator_name,
        objective=objective,
        planner=planner,
        budget=budget,
        m=m if m is not None else len(generator(states[0])),
    )
    return EvalReport([row])


def evaluate_discrete(
    env,
    generator,
    states,
    seed: int = 0,
    oracle: bool = True,
    generator_name: str = "heads",
    objective: str = "",
    m: int | None = None,
) -> EvalReport:
    """Sample one action per head, keep the best exact reward per state.

    There is no execution noise, so no planner runs; the oracle line (when
    enabled) is the brute-force optimum averaged over the same states."""
    states = list(states)
    if not states:
        raise ValueError("need at least one test state")
    scores = np.empty(len(states))
    n_actions = None
    for i, state in enumerate(states):
        actions = generator(state, substream(seed, 12, i))
        n_actions = len(actions)
        rewards = [env.reward(state, a) for a in actions]
        scores[i] = max(rewards)
    report = EvalReport(
        [
            EvalRow.from_scores(
                scores,
                generator=generator_name,
                objective=objective,
                planner="exact",
                budget=n_actions or 0,
                m=m if m is not None else (n_actions or 0),
            )
        ]
    )
    if oracle:
        oracle_scores = np.array([env.oracle(s)[1] for s in states])
        report.oracle_mean = float(oracle_scores.mean())
        report.oracle_scores = oracle_scores
    return report


def coverage_analysis(generator, states, bins: int = 32) -> np.ndarray:
    """(m, bins, bins) histograms of where each action slot lands in [0,1]^2.

    Each slot's map is normalized to sum 1 over (velocity, angle) bins."""
    states = list(states)
    if not states:
        raise ValueError("need at least one state")
    if bins < 2:
        raise ValueError("need at least two bins per axis")
    first = generator(states[0])
    m = len(first)
    edges = np.linspace(0.0, 1.0, bins + 1)
    maps = np.zeros((m, bins, bins))
    for state in states:
        actions = generator(state)
        if len(actions) != m:
            raise ValueError("generator changed its action count between states")
        for slot, a in enumerate(actions):
            h, _, _ = np.histogram2d([a.velocity], [a.angle], bins=(edges, edges))
            maps[slot] += h
    return maps / len(states)


def bhattacharyya_overlap(p: np.ndarray, q: np.ndarray) -> float:
    """Sum of sqrt(p*q); 1 for identical distributions, 0 for disjoint."""
    return float(np.sqrt(np.asarray(p) * np.asarray(q)).sum())


def mean_pairwise_overlap(maps: np.ndarray) -> float:
    m = maps.shape[0]
    if m < 2:
        raise ValueError("need at least two slots to compare")
    vals = [
        bhattacharyya_overlap(maps[i], maps[j])
        for i in range(m)
        for j in range(i + 1, m)
    ]
    return float(np.mean(vals))


def diversity_metric(action_sets) -> float:
    """Mean over states of mean pairwise distance in (velocity, angle)."""
    action_sets = list(action_sets)
    if not action_sets:
        raise ValueError("need at least one action set")
    per_state = []
    for actions in action_sets:
        if len(actions) < 2:
            raise ValueError("diversity needs at least two actions per state")
        va = np.array([[a.velocity, a.angle] for a in actions])
        diff = va[:, None, :] - va[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        n = len(actions)
        per_state.append(dist[np.triu_indices(n, k=1)].mean())
    return float(np.mean(per_state))


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in report.rows:
            writer.writerow(
                [r.generator, r.objective, r.planner, r.budget, r.m,
                 repr(r.mean), repr(r.ci), r.n_states]
            )
        if report.oracle_mean is not None:
            writer.writerow(
                ["oracle", "", "exhaustive", 0, 0, repr(report.oracle_mean), repr(0.0),
                 report.rows[0].n_states if report.rows else 0]
            )


def write_coverage_csv(maps: np.ndarray, directory: str | Path, prefix: str = "coverage") -> list[Path]:
    """One CSV matrix per action slot; rows are velocity bins."""
    directory = Path(directory)
    paths = []
    for slot in range(maps.shape[0]):
        path = directory / f"{prefix}-slot{slot:02d}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in maps[slot]:
                writer.writerow([repr(float(v)) for v in row])
        paths.append(path)
    return paths
