import csv
import math

import numpy as np
import pytest

from muplan.core import ContinuousAction, ExecutionModel, substream
from muplan.envs import make_env
from muplan.evaluation import (
    REPORT_COLUMNS,
    EvalReport,
    EvalRow,
    bhattacharyya_overlap,
    coverage_analysis,
    diversity_metric,
    evaluate_continuous,
    evaluate_discrete,
    mean_pairwise_overlap,
    write_coverage_csv,
    write_report_csv,
)
from muplan.generators import grid_generator

MODEL = ExecutionModel(0.02, 0.02)


def bump_states(n, seed=41):
    env = make_env("bump")
    rng = substream(seed)
    return env, [env.sample_state(rng) for _ in range(n)]


# ------------------------------------------------------------------ rows


def test_confidence_interval_math():
    row = EvalRow.from_scores(
        np.array([1.0, 2.0, 3.0, 4.0]),
        generator="g", objective="mu", planner="ucb", budget=8, m=4,
    )
    assert row.mean == 2.5
    std = np.array([1.0, 2.0, 3.0, 4.0]).std(ddof=1)
    assert row.ci == pytest.approx(1.96 * std / 2.0)
    assert row.n_states == 4


def test_single_score_has_zero_ci():
    row = EvalRow.from_scores(
        np.array([0.7]),
        generator="g", objective="mu", planner="ucb", budget=8, m=4,
    )
    assert row.ci == 0.0 and row.mean == 0.7


# ------------------------------------------------- continuous evaluation


def test_continuous_eval_reproducible_across_threads():
    env, states = bump_states(6)
    gen = grid_generator(4)
    kw = dict(budget=12, c=1.0, model=MODEL, eval_samples=50, seed=3,
              generator_name="grid", objective="", m=4)
    a = evaluate_continuous(env, gen, "ucb", states, **kw)
    b = evaluate_continuous(env, gen, "ucb", states, threads=3, **kw)
    assert np.array_equal(a.rows[0].scores, b.rows[0].scores)


def test_continuous_eval_seed_changes_scores():
    env, states = bump_states(4)
    gen = grid_generator(4)
    kw = dict(budget=12, c=1.0, model=MODEL, eval_samples=50)
    a = evaluate_continuous(env, gen, "ucb", states, seed=3, **kw)
    b = evaluate_continuous(env, gen, "ucb", states, seed=4, **kw)
    c = evaluate_continuous(env, gen, "ucb", states, seed=3, **kw)
    assert not np.array_equal(a.rows[0].scores, b.rows[0].scores)
    assert np.array_equal(a.rows[0].scores, c.rows[0].scores)


def test_continuous_eval_row_labels():
    env, states = bump_states(3)
    report = evaluate_continuous(
        env, grid_generator(6), "kr_ucb", states, budget=10, c=0.5,
        model=MODEL, eval_samples=20, seed=1,
        generator_name="grid", objective="none",
    )
    row = report.rows[0]
    assert (row.generator, row.objective, row.planner, row.budget) == (
        "grid", "none", "kr_ucb", 10)
    assert row.m == 6  # defaults to the candidate count
    assert row.n_states == 3


def test_continuous_eval_scores_reflect_surface():
    # planner picks near the bump peak, so scores approach the max of 1
    env, states = bump_states(5)
    report = evaluate_continuous(
        env, grid_generator(16), "ucb", states, budget=64, c=1.0,
        model=MODEL, eval_samples=200, seed=9,
    )
    assert report.rows[0].mean > 0.5


def test_continuous_eval_validation():
    env, states = bump_states(2)
    with pytest.raises(ValueError):
        evaluate_continuous(env, grid_generator(4), "ucb", [], budget=8,
                            c=1.0, model=MODEL)
    with pytest.raises(ValueError):
        evaluate_continuous(env, grid_generator(4), "mcts", states, budget=8,
                            c=1.0, model=MODEL)


# --------------------------------------------------- discrete evaluation


def test_discrete_eval_best_of_sampled_actions():
    env = make_env("location", {"n": 2, "k": 1, "k_opp": 1})
    rng = substream(43)
    states = [env.sample_state(rng) for _ in range(5)]

    def generator(state, gen_rng):
        # deterministic two-action generator; rng is accepted but unused
        from muplan.core import DiscreteAction

        return [DiscreteAction((0,)), DiscreteAction((3,))]

    report = evaluate_discrete(env, generator, states, seed=5, objective="mu")
    expect = [
        max(env.reward(s, a) for a in generator(s, None)) for s in states
    ]
    assert np.allclose(report.rows[0].scores, expect)
    assert report.rows[0].planner == "exact"
    oracle = np.array([env.oracle(s)[1] for s in states])
    assert report.oracle_mean == pytest.approx(oracle.mean())
    assert np.all(report.oracle_scores + 1e-12 >= report.rows[0].scores)


def test_discrete_eval_without_oracle():
    env = make_env("location", {"n": 2, "k": 1, "k_opp": 1})
    rng = substream(44)
    states = [env.sample_state(rng) for _ in range(3)]

    def generator(state, gen_rng):
        from muplan.core import DiscreteAction

        return [DiscreteAction((1,))]

    report = evaluate_discrete(env, generator, states, oracle=False)
    assert report.oracle_mean is None and report.oracle_scores is None


def test_report_extend_merges_rows_and_oracle():
    a = EvalReport([EvalRow.from_scores(np.array([1.0, 2.0]), generator="a",
                                        objective="", planner="ucb", budget=1, m=1)])
    b = EvalReport([EvalRow.from_scores(np.array([3.0]), generator="b",
                                        objective="", planner="ucb", budget=2, m=1)],
                   oracle_mean=0.9, oracle_scores=np.array([0.9]))
    a.extend(b)
    assert [r.generator for r in a.rows] == ["a", "b"]
    assert a.oracle_mean == 0.9


# ----------------------------------------------------------- coverage maps


def fixed_generator(points):
    actions = [ContinuousAction(v, a, 1) for v, a in points]

    def generate(state):
        return list(actions)

    return generate


def test_coverage_maps_are_normalized_histograms():
    env, states = bump_states(7)
    gen = fixed_generator([(0.125, 0.125), (0.875, 0.625)])
    maps = coverage_analysis(gen, states, bins=4)
    assert maps.shape == (2, 4, 4)
    assert np.allclose(maps.sum(axis=(1, 2)), 1.0)
    # 0.125 falls in bin 0 of 4, 0.875 in bin 3, 0.625 in bin 2
    assert maps[0, 0, 0] == 1.0
    assert maps[1, 3, 2] == 1.0


def test_coverage_rejects_changing_action_counts():
    env, states = bump_states(2)
    calls = {"n": 0}

    def flaky(state):
        calls["n"] += 1
        return [ContinuousAction(0.5, 0.5, 1)] * calls["n"]

    with pytest.raises(ValueError):
        coverage_analysis(flaky, states, bins=4)
    with pytest.raises(ValueError):
        coverage_analysis(fixed_generator([(0.5, 0.5)]), states, bins=1)
    with pytest.raises(ValueError):
        coverage_analysis(fixed_generator([(0.5, 0.5)]), [], bins=4)


def test_bhattacharyya_overlap_bounds():
    p = np.zeros((2, 2))
    p[0, 0] = 1.0
    q = np.zeros((2, 2))
    q[1, 1] = 1.0
    assert bhattacharyya_overlap(p, p) == pytest.approx(1.0)
    assert bhattacharyya_overlap(p, q) == 0.0
    u = np.full((2, 2), 0.25)
    assert bhattacharyya_overlap(p, u) == pytest.approx(0.5)


def test_mean_pairwise_overlap_hand_case():
    a = np.zeros((3, 2, 2))
    a[0, 0, 0] = 1.0
    a[1, 0, 0] = 1.0
    a[2, 1, 1] = 1.0
    # pairs: (0,1) = 1, (0,2) = 0, (1,2) = 0
    assert mean_pairwise_overlap(a) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        mean_pairwise_overlap(a[:1])


def test_diversity_metric_hand_cases():
    corners = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
    sets = [[ContinuousAction(v, a, 1) for v, a in corners]]
    # four unit sides and two sqrt(2) diagonals over six pairs
    assert diversity_metric(sets) == pytest.approx((4 + 2 * math.sqrt(2)) / 6)
    pair = [[ContinuousAction(0.2, 0.2, 1), ContinuousAction(0.2, 0.7, 1)]]
    assert diversity_metric(pair) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        diversity_metric([])
    with pytest.raises(ValueError):
        diversity_metric([[ContinuousAction(0.5, 0.5, 1)]])


# ------------------------------------------------------------------- CSVs


def sample_report():
    report = EvalReport(
        [
            EvalRow.from_scores(np.array([0.25, 0.5]), generator="net",
                                objective="mu", planner="ucb", budget=16, m=8),
            EvalRow.from_scores(np.array([0.1, 0.3]), generator="grid",
                                objective="", planner="kr_ucb", budget=64, m=8),
        ],
        oracle_mean=0.875,
        oracle_scores=np.array([0.75, 1.0]),
    )
    return report


def test_report_csv_round_trip(tmp_path):
    path = tmp_path / "report.csv"
    write_report_csv(sample_report(), path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert rows[1][:5] == ["net", "mu", "ucb", "16", "8"]
    assert float(rows[1][5]) == 0.375
    assert rows[3][0] == "oracle" and float(rows[3][5]) == 0.875
    # full-precision floats: parsing the text recovers the exact value
    report = sample_report()
    assert float(rows[2][6]) == report.rows[1].ci


def test_report_csv_byte_stable(tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_report_csv(sample_report(), p1)
    write_report_csv(sample_report(), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_coverage_csv_files(tmp_path):
    maps = np.zeros((2, 3, 3))
    maps[0, 1, 2] = 1.0
    maps[1, 0, 0] = 0.5
    maps[1, 2, 2] = 0.5
    paths = write_coverage_csv(maps, tmp_path, prefix="cov")
    assert [p.name for p in paths] == ["cov-slot00.csv", "cov-slot01.csv"]
    with open(paths[0], newline="") as fh:
        grid = np.array([[float(v) for v in row] for row in csv.reader(fh)])
    assert np.array_equal(grid, maps[0])
