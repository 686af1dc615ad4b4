"""Command-line entry point.

Subcommands: train, eval, analyze, sweep, corpus. Each takes a JSON config
(--config) and writes into a run directory named from a hash of the
effective config plus the seed, refusing to reuse an existing directory
unless --force is given. The manifest is written before any other output.

Exit codes: 0 success, 2 bad config, 3 missing or mismatched artifact,
4 training diverged (a diagnostic checkpoint is left in the run directory).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from pathlib import Path

from .config import (
    ArtifactError,
    ConfigError,
    EvalConfig,
    RunManifest,
    analyze_config,
    config_hash,
    corpus_config,
    eval_config,
    load_corpus,
    load_json,
    sweep_config,
    train_config,
    write_corpus,
    write_manifest,
)
from .core import ExecutionModel, substream
from .envs import make_env
from .evaluation import (
    EvalReport,
    coverage_analysis,
    diversity_metric,
    evaluate_continuous,
    evaluate_discrete,
    mean_pairwise_overlap,
    write_coverage_csv,
    write_report_csv,
)
from .generators import discrete_net_generator, net_generator, policy_generator
from .network import Checkpoint, load_checkpoint, save_checkpoint
from .planners import ExpansionConfig
from .training import TrainingDivergedError, train

__all__ = ["main"]


def _prepare_run_dir(out: str, command: str, doc: dict, seed: int, force: bool) -> Path:
    run_dir = Path(out) / f"{command}-{config_hash(doc)[:12]}-s{seed}"
    if run_dir.exists() and not force:
        raise ArtifactError(f"run directory exists: {run_dir} (use --force to overwrite)")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _write_metrics_csv(path: Path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective", "grad_norm"])
        for it, obj, gn in metrics:
            writer.writerow([it, repr(float(obj)), repr(float(gn))])


def _write_timing(path: Path, seconds: float) -> None:
    # wall-clock lives outside the CSVs so reruns stay byte-identical
    path.write_text(json.dumps({"seconds": seconds}) + "\n")


def _load_checkpoint_artifact(path: str) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise ArtifactError(f"checkpoint not found: {p}")
    try:
        return load_checkpoint(p)
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        raise ArtifactError(f"{p}: {e}") from e


def _generator_from_checkpoint(ck: Checkpoint, env):
    """Returns (generate, name, meta); raises on meta/env mismatches."""
    meta = ck.meta
    kind = meta.get("generator")
    if kind not in ("net", "heads", "policy"):
        raise ArtifactError(f"checkpoint has no usable generator kind: {kind!r}")
    m = int(meta.get("m", 0))
    if m < 1:
        raise ArtifactError("checkpoint metadata is missing the action count 'm'")
    name = f"{kind}-{meta.get('objective', '?')}"
    if kind == "net":
        return net_generator(ck.net, env), name, meta
    if kind == "policy":
        side = int(meta.get("policy_side", 16))
        return policy_generator(ck.net, env, m, side), name, meta
    return discrete_net_generator(ck.net, env, m), name, meta


def _check_env_match(meta: dict, corpus_env_name: str, ckpt_path: str) -> None:
    trained_on = meta.get("environment")
    if trained_on != corpus_env_name:
        raise ArtifactError(
            f"{ckpt_path}: trained on {trained_on!r}, corpus is {corpus_env_name!r}"
        )


def cmd_train(doc: dict, out: str, force: bool) -> int:
    cfg = train_config(doc)
    run_dir = _prepare_run_dir(out, "train", doc, cfg.seed, force)
    outputs = ["checkpoint.json", "metrics.csv", "timing.json"]
    if cfg.checkpoint_every:
        outputs += [
            f"checkpoint-{it:06d}.json"
            for it in range(cfg.checkpoint_every, cfg.iterations + 1, cfg.checkpoint_every)
        ]
    manifest = RunManifest("train", config_hash(doc), cfg.seed, outputs=outputs)
    write_manifest(run_dir, manifest)
    t0 = time.perf_counter()
    try:
        result = train(cfg)
    except TrainingDivergedError as e:
        save_checkpoint(
            run_dir / "diagnostic-checkpoint.json",
            e.net,
            e.adam,
            iteration=e.iteration,
            meta={"diverged": True, "environment": cfg.environment},
        )
        manifest.outputs = ["diagnostic-checkpoint.json"]
        write_manifest(run_dir, manifest)
        raise
    seconds = time.perf_counter() - t0
    save_checkpoint(
        run_dir / "checkpoint.json",
        result.net,
        result.adam,
        iteration=cfg.iterations,
        meta=result.meta,
    )
    for it, params in result.snapshots:
        save_checkpoint(
            run_dir / f"checkpoint-{it:06d}.json",
            result.net.with_params(params),
            iteration=it,
            meta=result.meta,
        )
    _write_metrics_csv(run_dir / "metrics.csv", result.metrics)
    _write_timing(run_dir / "timing.json", seconds)
    print(run_dir)
    return 0


def cmd_corpus(doc: dict, out: str, force: bool) -> int:
    cfg = corpus_config(doc)
    run_dir = _prepare_run_dir(out, "corpus", doc, cfg.seed, force)
    write_manifest(run_dir, RunManifest("corpus", config_hash(doc), cfg.seed,
                                        outputs=["corpus.json"]))
    write_corpus(run_dir / "corpus.json", cfg)
    print(run_dir / "corpus.json")
    return 0


def _eval_one_checkpoint(ec: EvalConfig, ckpt_path: str, env, env_name: str,
                         states, want_oracle: bool) -> EvalReport:
    ck = _load_checkpoint_artifact(ckpt_path)
    generate, name, meta = _generator_from_checkpoint(ck, env)
    _check_env_match(meta, env_name, ckpt_path)
    report = EvalReport()
    if meta["generator"] == "heads":
        report.extend(
            evaluate_discrete(
                env, generate, states, seed=ec.seed, oracle=want_oracle,
                generator_name=name, objective=meta.get("objective", ""),
                m=int(meta["m"]),
            )
        )
        return report
    model = ExecutionModel(
        float(meta.get("sigma_velocity", 0.02)), float(meta.get("sigma_angle", 0.02))
    )
    expansion = ExpansionConfig(ec.expansion_threshold, ec.expansion_cap)
    for planner in ec.planners:
        c = ec.ucb_c if planner == "ucb" else ec.kr_ucb_c
        for budget in ec.budgets:
            report.extend(
                evaluate_continuous(
                    env, generate, planner, states, budget, c, model,
                    eval_samples=ec.eval_samples, seed=ec.seed,
                    expansion=expansion, threads=ec.threads,
                    generator_name=name, objective=meta.get("objective", ""),
                    m=int(meta["m"]),
                )
            )
    return report


def _write_plotdata_csv(report: EvalReport, path: Path) -> None:
    """Long-form series: one (generator, planner) curve point per row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generator", "planner", "budget", "mean", "lo", "hi"])
        for r in report.rows:
            writer.writerow(
                [r.generator, r.planner, r.budget,
                 repr(r.mean), repr(r.mean - r.ci), repr(r.mean + r.ci)]
            )


def cmd_eval(doc: dict, out: str, force: bool) -> int:
    ec = eval_config(doc)
    env, states = load_corpus(ec.corpus, ec.max_states)
    corpus_doc = json.loads(Path(ec.corpus).read_text())
    env_name = corpus_doc["environment"]
    run_dir = _prepare_run_dir(out, "eval", doc, ec.seed, force)
    write_manifest(run_dir, RunManifest(
        "eval", config_hash(doc), ec.seed,
        outputs=["report.csv", "plotdata.csv", "timing.json"],
    ))
    t0 = time.perf_counter()
    report = EvalReport()
    oracle_done = False
    for ckpt_path in ec.checkpoints:
        want_oracle = hasattr(env, "oracle") and not oracle_done
        part = _eval_one_checkpoint(ec, ckpt_path, env, env_name, states, want_oracle)
        if part.oracle_mean is not None:
            oracle_done = True
        report.extend(part)
    write_report_csv(report, run_dir / "report.csv")
    _write_plotdata_csv(report, run_dir / "plotdata.csv")
    _write_timing(run_dir / "timing.json", time.perf_counter() - t0)
    print(run_dir)
    return 0


def cmd_analyze(doc: dict, out: str, force: bool) -> int:
    ac = analyze_config(doc)
    env, states = load_corpus(ac.corpus, ac.max_states)
    corpus_doc = json.loads(Path(ac.corpus).read_text())
    ck = _load_checkpoint_artifact(ac.checkpoint)
    generate, name, meta = _generator_from_checkpoint(ck, env)
    _check_env_match(meta, corpus_doc["environment"], ac.checkpoint)
    if meta["generator"] == "heads":
        raise ArtifactError("coverage analysis needs a continuous-action generator")
    run_dir = _prepare_run_dir(out, "analyze", doc, ac.seed, force)
    m = int(meta["m"])
    outputs = [f"coverage-slot{s:02d}.csv" for s in range(m)]
    outputs += ["summary.csv", "timing.json"]
    write_manifest(run_dir, RunManifest("analyze", config_hash(doc), ac.seed,
                                        outputs=outputs))
    t0 = time.perf_counter()
    maps = coverage_analysis(generate, states, ac.bins)
    action_sets = [generate(s) for s in states]
    write_coverage_csv(maps, run_dir)
    with open(run_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["generator", name])
        writer.writerow(["n_states", len(states)])
        writer.writerow(["m", m])
        writer.writerow(["bins", ac.bins])
        if m >= 2:
            writer.writerow(["diversity", repr(diversity_metric(action_sets))])
            writer.writerow(["mean_pairwise_overlap", repr(mean_pairwise_overlap(maps))])
    _write_timing(run_dir / "timing.json", time.perf_counter() - t0)
    print(run_dir)
    return 0


def cmd_sweep(doc: dict, out: str, force: bool) -> int:
    sc = sweep_config(doc)
    run_dir = _prepare_run_dir(out, "sweep", doc, sc.seed, force)
    write_manifest(run_dir, RunManifest("sweep", config_hash(doc), sc.seed,
                                        outputs=["summary.csv", "timing.json"]))
    t0 = time.perf_counter()
    base = dict(sc.train)
    env = make_env(base["environment"], base.get("env_options", {}))
    states = [env.sample_state(substream(sc.seed, 3, i)) for i in range(sc.states)]
    rows = []
    combos = itertools.product(sc.c, sc.temperature, sc.learning_rate, sc.sigma)
    for idx, (c_val, tau, lr, sig) in enumerate(combos):
        d = dict(base)
        d["temperature"] = tau
        d["sigma_velocity"] = sig
        d["sigma_angle"] = sig
        if lr is not None:
            d["learning_rate"] = lr
        d["threads"] = sc.threads
        cfg = train_config(d)
        try:
            result = train(cfg)
        except TrainingDivergedError as e:
            save_checkpoint(
                run_dir / f"diagnostic-combo{idx:03d}.json", e.net, e.adam,
                iteration=e.iteration, meta={"diverged": True},
            )
            raise
        kind = result.meta["generator"]
        if kind == "heads":
            gen = discrete_net_generator(result.net, env, cfg.m)
            rep = evaluate_discrete(
                env, gen, states, seed=sc.seed, oracle=False,
                generator_name=f"combo{idx:03d}", objective=cfg.objective, m=cfg.m,
            )
        else:
            if kind == "policy":
                gen = policy_generator(result.net, env, cfg.m, cfg.policy_side)
            else:
                gen = net_generator(result.net, env)
            rep = evaluate_continuous(
                env, gen, sc.planner, states, sc.budget, c_val,
                ExecutionModel(sig, sig), eval_samples=sc.eval_samples,
                seed=sc.seed, threads=sc.threads,
                generator_name=f"combo{idx:03d}", objective=cfg.objective, m=cfg.m,
            )
        row = rep.rows[0]
        rows.append([c_val, tau, repr(cfg.lr), sig, repr(row.mean), repr(row.ci)])
    with open(run_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["c", "temperature", "learning_rate", "sigma", "mean", "ci"])
        writer.writerows(rows)
    _write_timing(run_dir / "timing.json", time.perf_counter() - t0)
    print(run_dir)
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="JSON config file")
    sub.add_argument("--out", default="runs", help="parent directory for run outputs")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (never changes results)")
    sub.add_argument("--force", action="store_true",
                     help="overwrite an existing run directory")


_THREADED = {"train", "eval", "sweep"}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="muplan",
        description="Train, evaluate, and analyze candidate-action generators.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("train", "train a generator and write a checkpoint"),
        ("eval", "budget sweep of checkpoints over a state corpus"),
        ("analyze", "coverage and diversity maps for a checkpoint"),
        ("sweep", "grid over exploration/temperature/step/noise settings"),
        ("corpus", "sample and store a shared set of test states"),
    ]:
        _add_common(subs.add_parser(name, help=helptext))
    args = parser.parse_args(argv)

    try:
        doc = load_json(args.config)
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.threads is not None and args.command in _THREADED:
            doc["threads"] = args.threads
        handler = {
            "train": cmd_train,
            "eval": cmd_eval,
            "analyze": cmd_analyze,
            "sweep": cmd_sweep,
            "corpus": cmd_corpus,
        }[args.command]
        return handler(doc, args.out, args.force)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
