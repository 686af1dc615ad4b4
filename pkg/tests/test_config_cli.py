import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from muplan.cli import main
from muplan.config import (
    ArtifactError,
    ConfigError,
    CorpusConfig,
    analyze_config,
    config_hash,
    corpus_config,
    eval_config,
    load_corpus,
    load_json,
    sweep_config,
    train_config,
    write_corpus,
)

TRAIN_DOC = {
    "environment": "bump",
    "objective": "mu",
    "m": 2,
    "iterations": 12,
    "minibatch": 2,
    "hidden": [8],
    "seed": 3,
}


def write_json(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc))
    return path


# ----------------------------------------------------------------- configs


def test_load_json_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_json(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  broken\n}")
    with pytest.raises(ConfigError, match="line 2"):
        load_json(bad)
    arr = write_json(tmp_path / "arr.json", {})
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="object"):
        load_json(arr)


def test_train_config_names_offending_keys():
    with pytest.raises(ConfigError, match="'objektive'"):
        train_config({"environment": "bump", "objective": "mu", "objektive": 1})
    with pytest.raises(ConfigError, match="'objective'"):
        train_config({"environment": "bump"})
    with pytest.raises(ConfigError):
        train_config({"environment": "warp", "objective": "mu"})
    with pytest.raises(ConfigError):
        train_config({"environment": "bump", "objective": "mu",
                      "env_options": {"width": -1.0}})


def test_eval_config_checkpoint_merging():
    ec = eval_config({"corpus": "c.json", "checkpoint": "a.json"})
    assert ec.checkpoints == ("a.json",)
    ec = eval_config({"corpus": "c.json", "checkpoints": ["a.json", "b.json"]})
    assert ec.checkpoints == ("a.json", "b.json")
    with pytest.raises(ConfigError, match="checkpoint"):
        eval_config({"corpus": "c.json"})
    with pytest.raises(ConfigError, match="'corpus'"):
        eval_config({"checkpoint": "a.json"})


def test_eval_config_defaults_and_validation():
    ec = eval_config({"corpus": "c.json", "checkpoint": "a.json"})
    assert ec.budgets == (16, 32, 64, 128, 256, 512, 1024)
    assert ec.planners == ("ucb",)
    assert (ec.ucb_c, ec.kr_ucb_c) == (1.0, 0.5)
    assert (ec.expansion_threshold, ec.expansion_cap) == (2.0, 64)
    assert ec.eval_samples == 1000
    with pytest.raises(ConfigError, match="planner"):
        eval_config({"corpus": "c", "checkpoint": "a", "planners": ["mcts"]})
    with pytest.raises(ConfigError, match="budgets"):
        eval_config({"corpus": "c", "checkpoint": "a", "budgets": []})


def test_analyze_and_sweep_and_corpus_validation():
    with pytest.raises(ConfigError, match="bins"):
        analyze_config({"checkpoint": "a", "corpus": "c", "bins": 1})
    with pytest.raises(ConfigError, match="'train'"):
        sweep_config({"c": [1.0]})
    with pytest.raises(ConfigError):
        sweep_config({"train": {"environment": "bump"}})  # invalid inner train
    with pytest.raises(ConfigError, match="temperature"):
        sweep_config({"train": dict(TRAIN_DOC), "temperature": []})
    with pytest.raises(ConfigError, match="count"):
        corpus_config({"environment": "bump", "count": 0})


def test_config_hash_ignores_workers_and_key_order():
    a = {"environment": "bump", "objective": "mu", "threads": 1}
    b = {"objective": "mu", "environment": "bump", "threads": 8}
    c = {"environment": "bump", "objective": "max"}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 64


# ----------------------------------------------------------------- corpora


def test_corpus_round_trip(tmp_path):
    path = tmp_path / "corpus.json"
    n = write_corpus(path, CorpusConfig("bump", count=5, seed=9))
    assert n == 5
    env, states = load_corpus(path)
    assert env.name == "bump" and len(states) == 5
    again = tmp_path / "again.json"
    write_corpus(again, CorpusConfig("bump", count=5, seed=9))
    assert path.read_bytes() == again.read_bytes()
    _, fewer = load_corpus(path, max_states=2)
    assert len(fewer) == 2
    assert [s.cx for s in fewer] == [s.cx for s in states[:2]]


def test_corpus_round_trip_location(tmp_path):
    path = tmp_path / "corpus.json"
    opts = {"n": 2, "k": 1, "k_opp": 1}
    write_corpus(path, CorpusConfig("location", count=3, seed=2, env_options=opts))
    env, states = load_corpus(path)
    assert env.n == 2 and env.k == 1
    assert all(s.values.shape == (4,) for s in states)
    assert all(abs(s.values.sum() - 1.0) < 1e-9 for s in states)


def test_load_corpus_errors(tmp_path):
    with pytest.raises(ArtifactError, match="not found"):
        load_corpus(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    with pytest.raises(ArtifactError, match="not a corpus"):
        load_corpus(bad)
    wrong = write_json(tmp_path / "wrong.json", {"format": "other"})
    with pytest.raises(ArtifactError, match="not a corpus"):
        load_corpus(wrong)
    empty = write_json(tmp_path / "empty.json",
                       {"format": "muplan-corpus-v1", "environment": "bump",
                        "states": []})
    with pytest.raises(ArtifactError, match="empty"):
        load_corpus(empty)


# --------------------------------------------------------------------- CLI


def run_dir_for(out: Path, command: str, doc: dict, seed: int) -> Path:
    return out / f"{command}-{config_hash(doc)[:12]}-s{seed}"


def test_cli_train_writes_artifacts(tmp_path):
    cfg = write_json(tmp_path / "train.json", TRAIN_DOC)
    out = tmp_path / "runs"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    run_dir = run_dir_for(out, "train", TRAIN_DOC, 3)
    assert run_dir.is_dir()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seed"] == 3
    assert set(manifest["outputs"]) == {"checkpoint.json", "metrics.csv", "timing.json"}
    assert (run_dir / "checkpoint.json").exists()
    metrics = (run_dir / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "iteration,objective,grad_norm"
    assert len(metrics) == 1 + TRAIN_DOC["iterations"]
    assert json.loads((run_dir / "timing.json").read_text())["seconds"] > 0


def test_cli_refuses_existing_run_dir_without_force(tmp_path, capsys):
    cfg = write_json(tmp_path / "train.json", TRAIN_DOC)
    out = tmp_path / "runs"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 3
    assert "--force" in capsys.readouterr().err
    assert main(["train", "--config", str(cfg), "--out", str(out), "--force"]) == 0


def test_cli_rerun_is_byte_identical(tmp_path):
    cfg = write_json(tmp_path / "train.json", TRAIN_DOC)
    out = tmp_path / "runs"
    main(["train", "--config", str(cfg), "--out", str(out)])
    run_dir = run_dir_for(out, "train", TRAIN_DOC, 3)
    first_metrics = (run_dir / "metrics.csv").read_bytes()
    first_ckpt = (run_dir / "checkpoint.json").read_bytes()
    main(["train", "--config", str(cfg), "--out", str(out), "--force"])
    assert (run_dir / "metrics.csv").read_bytes() == first_metrics
    assert (run_dir / "checkpoint.json").read_bytes() == first_ckpt


def test_cli_seed_override_changes_run_dir(tmp_path):
    cfg = write_json(tmp_path / "train.json", TRAIN_DOC)
    out = tmp_path / "runs"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--seed", "7"]) == 0
    overridden = dict(TRAIN_DOC, seed=7)
    run_dir = run_dir_for(out, "train", overridden, 7)
    assert run_dir.is_dir()
    meta = json.loads((run_dir / "checkpoint.json").read_text())["meta"]
    assert meta["seed"] == 7


def test_cli_snapshot_checkpoints(tmp_path):
    doc = dict(TRAIN_DOC, checkpoint_every=5, iterations=10)
    cfg = write_json(tmp_path / "train.json", doc)
    out = tmp_path / "runs"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    run_dir = run_dir_for(out, "train", doc, 3)
    assert (run_dir / "checkpoint-000005.json").exists()
    assert (run_dir / "checkpoint-000010.json").exists()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert "checkpoint-000005.json" in manifest["outputs"]


def test_cli_bad_config_exits_2(tmp_path, capsys):
    cfg = write_json(tmp_path / "bad.json", dict(TRAIN_DOC, junk=True))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
    assert "junk" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "r")]) == 2


def test_cli_divergence_exits_4_with_diagnostic(tmp_path, capsys):
    doc = dict(TRAIN_DOC, learning_rate=1e200, iterations=20)
    cfg = write_json(tmp_path / "train.json", doc)
    out = tmp_path / "runs"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 4
    assert "non-finite" in capsys.readouterr().err
    run_dir = run_dir_for(out, "train", doc, 3)
    diag = json.loads((run_dir / "diagnostic-checkpoint.json").read_text())
    assert diag["meta"]["diverged"] is True
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["outputs"] == ["diagnostic-checkpoint.json"]


def make_corpus(tmp_path, doc, name="corpus"):
    cfg = write_json(tmp_path / f"{name}.json", doc)
    out = tmp_path / f"{name}-runs"
    assert main(["corpus", "--config", str(cfg), "--out", str(out)]) == 0
    return run_dir_for(out, "corpus", doc, doc.get("seed", 0)) / "corpus.json"


def make_checkpoint(tmp_path, doc, name="train"):
    cfg = write_json(tmp_path / f"{name}.json", doc)
    out = tmp_path / f"{name}-runs"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    return run_dir_for(out, "train", doc, doc.get("seed", 0)) / "checkpoint.json"


def test_cli_eval_continuous_sweep(tmp_path):
    corpus = make_corpus(tmp_path, {"environment": "bump", "count": 3, "seed": 1})
    ckpt = make_checkpoint(tmp_path, TRAIN_DOC)
    doc = {
        "corpus": str(corpus),
        "checkpoint": str(ckpt),
        "budgets": [4, 6],
        "planners": ["ucb", "kr_ucb"],
        "eval_samples": 20,
        "seed": 5,
    }
    cfg = write_json(tmp_path / "eval.json", doc)
    out = tmp_path / "eval-runs"
    assert main(["eval", "--config", str(cfg), "--out", str(out)]) == 0
    run_dir = run_dir_for(out, "eval", doc, 5)
    report = (run_dir / "report.csv").read_text().splitlines()
    assert report[0] == "generator,objective,planner,budget,m,mean,ci,n_states"
    assert len(report) == 1 + 2 * 2  # planners x budgets
    assert all(line.split(",")[7] == "3" for line in report[1:])
    plot = (run_dir / "plotdata.csv").read_text().splitlines()
    assert plot[0] == "generator,planner,budget,mean,lo,hi"
    assert len(plot) == 5

    # same evaluation with threads: same run dir (hash ignores threads),
    # byte-identical report
    first = (run_dir / "report.csv").read_bytes()
    assert main(["eval", "--config", str(cfg), "--out", str(out),
                 "--threads", "3", "--force"]) == 0
    assert (run_dir / "report.csv").read_bytes() == first


def test_cli_eval_discrete_with_oracle_row(tmp_path):
    opts = {"n": 2, "k": 1, "k_opp": 1}
    corpus = make_corpus(tmp_path, {"environment": "location", "count": 4,
                                    "seed": 2, "env_options": opts})
    ckpt = make_checkpoint(tmp_path, {
        "environment": "location", "objective": "mu", "m": 2, "iterations": 8,
        "minibatch": 2, "hidden": [8], "seed": 4, "env_options": opts,
    })
    doc = {"corpus": str(corpus), "checkpoint": str(ckpt), "seed": 6}
    cfg = write_json(tmp_path / "eval.json", doc)
    out = tmp_path / "eval-runs"
    assert main(["eval", "--config", str(cfg), "--out", str(out)]) == 0
    report = (run_dir_for(out, "eval", doc, 6) / "report.csv").read_text().splitlines()
    assert len(report) == 3  # header + one exact row + oracle row
    assert report[1].split(",")[2] == "exact"
    assert report[2].startswith("oracle,")
    gen_mean = float(report[1].split(",")[5])
    oracle_mean = float(report[2].split(",")[5])
    assert gen_mean <= oracle_mean + 1e-12


def test_cli_eval_env_mismatch_exits_3(tmp_path, capsys):
    corpus = make_corpus(tmp_path, {"environment": "bump", "count": 2, "seed": 1})
    ckpt = make_checkpoint(tmp_path, {
        "environment": "location", "objective": "mu", "m": 2, "iterations": 4,
        "minibatch": 2, "hidden": [8], "seed": 4,
        "env_options": {"n": 2, "k": 1, "k_opp": 1},
    })
    doc = {"corpus": str(corpus), "checkpoint": str(ckpt)}
    cfg = write_json(tmp_path / "eval.json", doc)
    assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 3
    assert "trained on" in capsys.readouterr().err


def test_cli_eval_missing_artifacts_exit_3(tmp_path):
    corpus = make_corpus(tmp_path, {"environment": "bump", "count": 2, "seed": 1})
    doc = {"corpus": str(corpus), "checkpoint": str(tmp_path / "none.json")}
    cfg = write_json(tmp_path / "eval.json", doc)
    assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / "r1")]) == 3
    doc2 = {"corpus": str(tmp_path / "none.json"), "checkpoint": str(corpus)}
    cfg2 = write_json(tmp_path / "eval2.json", doc2)
    assert main(["eval", "--config", str(cfg2), "--out", str(tmp_path / "r2")]) == 3


def test_cli_analyze_coverage(tmp_path):
    corpus = make_corpus(tmp_path, {"environment": "bump", "count": 4, "seed": 1})
    ckpt = make_checkpoint(tmp_path, TRAIN_DOC)
    doc = {"checkpoint": str(ckpt), "corpus": str(corpus), "bins": 8}
    cfg = write_json(tmp_path / "analyze.json", doc)
    out = tmp_path / "an-runs"
    assert main(["analyze", "--config", str(cfg), "--out", str(out)]) == 0
    run_dir = run_dir_for(out, "analyze", doc, 0)
    assert (run_dir / "coverage-slot00.csv").exists()
    assert (run_dir / "coverage-slot01.csv").exists()
    summary = dict(
        line.split(",", 1) for line in
        (run_dir / "summary.csv").read_text().splitlines()[1:]
    )
    assert summary["m"] == "2" and summary["bins"] == "8"
    assert float(summary["diversity"]) >= 0.0
    assert 0.0 <= float(summary["mean_pairwise_overlap"]) <= 1.0 + 1e-12


def test_cli_analyze_rejects_discrete_checkpoint(tmp_path):
    opts = {"n": 2, "k": 1, "k_opp": 1}
    corpus = make_corpus(tmp_path, {"environment": "location", "count": 2,
                                    "seed": 2, "env_options": opts})
    ckpt = make_checkpoint(tmp_path, {
        "environment": "location", "objective": "mu", "m": 2, "iterations": 4,
        "minibatch": 2, "hidden": [8], "seed": 4, "env_options": opts,
    })
    doc = {"checkpoint": str(ckpt), "corpus": str(corpus)}
    cfg = write_json(tmp_path / "analyze.json", doc)
    assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 3


def test_cli_sweep_grid(tmp_path):
    doc = {
        "train": dict(TRAIN_DOC, iterations=6),
        "c": [0.5, 1.0],
        "sigma": [0.02],
        "planner": "ucb",
        "budget": 4,
        "states": 2,
        "eval_samples": 10,
        "seed": 8,
    }
    cfg = write_json(tmp_path / "sweep.json", doc)
    out = tmp_path / "sweep-runs"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    run_dir = run_dir_for(out, "sweep", doc, 8)
    rows = (run_dir / "summary.csv").read_text().splitlines()
    assert rows[0] == "c,temperature,learning_rate,sigma,mean,ci"
    assert len(rows) == 3  # two c values x one of everything else
    assert rows[1].split(",")[0] == "0.5"
    assert rows[2].split(",")[0] == "1.0"


def test_cli_corpus_command(tmp_path, capsys):
    doc = {"environment": "bump", "count": 3, "seed": 11}
    cfg = write_json(tmp_path / "corpus.json", doc)
    out = tmp_path / "runs"
    assert main(["corpus", "--config", str(cfg), "--out", str(out)]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed.endswith("corpus.json")
    env, states = load_corpus(printed)
    assert len(states) == 3
    manifest = json.loads((Path(printed).parent / "manifest.json").read_text())
    assert manifest["command"] == "corpus"
    assert manifest["outputs"] == ["corpus.json"]
