"""Config files, run manifests, and state corpora.

Configs are JSON objects validated strictly: unknown keys are errors, and
messages name the offending key. A run directory is named by a hash of the
effective config (worker count excluded, since it never changes results)
plus the seed, and its manifest is written before any other output.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .envs import make_env
from .training import TrainConfig

__all__ = [
    "ConfigError",
    "ArtifactError",
    "load_json",
    "train_config",
    "EvalConfig",
    "eval_config",
    "AnalyzeConfig",
    "analyze_config",
    "SweepConfig",
    "sweep_config",
    "CorpusConfig",
    "corpus_config",
    "config_hash",
    "RunManifest",
    "write_manifest",
    "write_corpus",
    "load_corpus",
]


class ConfigError(ValueError):
    """Invalid or unreadable configuration (CLI exit code 2)."""


class ArtifactError(RuntimeError):
    """Missing or mismatched checkpoint/corpus/run artifacts (exit code 3)."""


def load_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def _build(cls, doc: dict, context: str, required: tuple[str, ...] = ()):
    names = {f.name for f in fields(cls)}
    for key in doc:
        if key not in names:
            raise ConfigError(f"{context}: unknown key {key!r}")
    for key in required:
        if key not in doc:
            raise ConfigError(f"{context}: missing required key {key!r}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{context}: {e}") from e


def train_config(doc: dict) -> TrainConfig:
    cfg = _build(TrainConfig, doc, "train config", required=("environment", "objective"))
    try:
        make_env(cfg.environment, cfg.env_options)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"train config: {e}") from e
    return cfg


@dataclass(frozen=True)
class EvalConfig:
    corpus: str
    checkpoints: tuple[str, ...] = ()
    checkpoint: str | None = None
    budgets: tuple[int, ...] = (16, 32, 64, 128, 256, 512, 1024)
    planners: tuple[str, ...] = ("ucb",)
    ucb_c: float = 1.0
    kr_ucb_c: float = 0.5
    expansion_threshold: float = 2.0
    expansion_cap: int = 64
    eval_samples: int = 1000
    max_states: int | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "budgets", tuple(int(x) for x in self.budgets))
        object.__setattr__(self, "planners", tuple(self.planners))
        paths = tuple(self.checkpoints) + ((self.checkpoint,) if self.checkpoint else ())
        if not paths:
            raise ValueError("need 'checkpoint' or a non-empty 'checkpoints' list")
        object.__setattr__(self, "checkpoints", paths)
        object.__setattr__(self, "checkpoint", None)
        for p in self.planners:
            if p not in ("ucb", "kr_ucb"):
                raise ValueError(f"unknown planner {p!r}")
        if any(b < 1 for b in self.budgets) or not self.budgets:
            raise ValueError("budgets must be positive")
        if self.eval_samples < 1:
            raise ValueError("eval_samples must be at least 1")


def eval_config(doc: dict) -> EvalConfig:
    return _build(EvalConfig, doc, "eval config", required=("corpus",))


@dataclass(frozen=True)
class AnalyzeConfig:
    checkpoint: str
    corpus: str
    bins: int = 32
    max_states: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.bins < 2:
            raise ValueError("bins must be at least 2")


def analyze_config(doc: dict) -> AnalyzeConfig:
    return _build(AnalyzeConfig, doc, "analyze config", required=("checkpoint", "corpus"))


@dataclass(frozen=True)
class SweepConfig:
    train: dict
    c: tuple[float, ...] = (1.0,)
    temperature: tuple[float, ...] = (0.1,)
    learning_rate: tuple[float, ...] | tuple[None, ...] = (None,)
    sigma: tuple[float, ...] = (0.02,)
    planner: str = "kr_ucb"
    budget: int = 64
    states: int = 32
    eval_samples: int = 200
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        for name in ("c", "temperature", "learning_rate", "sigma"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"{name} list must not be empty")
            object.__setattr__(self, name, vals)
        if self.planner not in ("ucb", "kr_ucb"):
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.budget < 1 or self.states < 1 or self.eval_samples < 1:
            raise ValueError("budget, states, and eval_samples must be positive")


def sweep_config(doc: dict) -> SweepConfig:
    cfg = _build(SweepConfig, doc, "sweep config", required=("train",))
    train_config(dict(cfg.train))
    return cfg


@dataclass(frozen=True)
class CorpusConfig:
    environment: str
    count: int
    seed: int = 0
    env_options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be at least 1")


def corpus_config(doc: dict) -> CorpusConfig:
    cfg = _build(CorpusConfig, doc, "corpus config", required=("environment", "count"))
    try:
        make_env(cfg.environment, cfg.env_options)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"corpus config: {e}") from e
    return cfg


def config_hash(doc: dict) -> str:
    """Hash of the effective config; worker count is execution detail."""
    doc = {k: v for k, v in doc.items() if k != "threads"}
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    version: str = __version__
    outputs: list[str] = field(default_factory=list)


def write_manifest(run_dir: Path, manifest: RunManifest) -> None:
    (run_dir / "manifest.json").write_text(
        json.dumps(asdict(manifest), sort_keys=True, indent=1) + "\n"
    )


CORPUS_FORMAT = "muplan-corpus-v1"


def write_corpus(path: str | Path, cfg: CorpusConfig) -> int:
    """Sample `count` states and store them with their provenance."""
    env = make_env(cfg.environment, cfg.env_options)
    from .core import substream

    states = [env.sample_state(substream(cfg.seed, 3, i)) for i in range(cfg.count)]
    doc = {
        "format": CORPUS_FORMAT,
        "environment": cfg.environment,
        "env_options": cfg.env_options,
        "seed": cfg.seed,
        "states": [env.state_records(s) for s in states],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")
    return len(states)


def load_corpus(path: str | Path, max_states: int | None = None):
    """Returns (env, states). The env is rebuilt from stored options."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"corpus not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ArtifactError(f"{path}: not a corpus file ({e.msg})") from e
    if doc.get("format") != CORPUS_FORMAT:
        raise ArtifactError(f"{path}: not a corpus file")
    env = make_env(doc["environment"], doc.get("env_options", {}))
    records = doc.get("states", [])
    if not records:
        raise ArtifactError(f"{path}: corpus is empty")
    if max_states is not None:
        records = records[:max_states]
    states = [env.state_from_records(r) for r in records]
    return env, states
