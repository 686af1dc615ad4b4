"""Training loops for candidate generators and baselines.

Continuous training follows one recipe for every utility kind: generate m
actions per state, execute each a few times through noise, kernel-regress
values from the pooled outcomes, and ascend the utility's semi-gradient.
Discrete training samples one action per policy head and ascends the
score-function estimator for the chosen utility (or plain REINFORCE on a
single head). The policy-distillation baseline instead imitates KR-UCB's
visit distribution over a discretized action grid.

All loops draw states and noise from one sequential stream, so a fixed seed
reproduces runs bit for bit; worker threads only parallelize pure reward
evaluations gathered by index.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ContinuousAction, ExecutionModel, SampleSet, substream
from .envs import make_env
from .generators import GENERATED_TURN, policy_cell_centers
from .network import (
    AdamState,
    GeneratorNet,
    adam_step,
    backward,
    forward,
    init_glorot,
    mlp,
)
from .objectives import (
    UTILITY_KINDS,
    distillation_loss_gradient,
    estimator_weights,
    output_semi_gradient,
    sample_cells,
    softmax_rows,
    tuple_logprob_logit_grad,
    utility,
)
from .planners import ExpansionConfig, kr_ucb_plan

__all__ = [
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "DEFAULT_LEARNING_RATES",
    "train",
    "train_continuous",
    "train_discrete",
    "train_policy_baseline",
]

DEFAULT_LEARNING_RATES = {
    "mu": 1e-4,
    "max": 1e-4,
    "sum": 1e-4,
    "softmax": 1e-5,
    "reinforce": 1e-5,
    "policy": 1e-4,
}

OBJECTIVES = (*UTILITY_KINDS, "reinforce", "policy")


@dataclass(frozen=True)
class TrainConfig:
    environment: str
    objective: str
    m: int = 8
    iterations: int = 5000
    minibatch: int = 32
    outcomes_per_action: int = 4
    learning_rate: float | None = None
    weight_decay: float = 1e-4
    temperature: float = 0.1
    sigma_velocity: float = 0.02
    sigma_angle: float = 0.02
    hidden: tuple[int, ...] = (128, 128)
    seed: int = 0
    checkpoint_every: int = 0
    env_options: dict = field(default_factory=dict)
    policy_side: int = 16
    policy_budget: int = 128
    policy_c: float = 0.5
    threads: int = 1

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        for name in ("m", "minibatch", "outcomes_per_action",
                     "policy_side", "policy_budget", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be non-negative")
        for name in ("temperature", "sigma_velocity", "sigma_angle", "policy_c"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate is not None and self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_LEARNING_RATES[self.objective]


@dataclass
class TrainResult:
    net: GeneratorNet
    adam: AdamState
    metrics: list[tuple[int, float, float]]
    """(iteration, mean objective value, gradient norm) per iteration."""
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


class TrainingDivergedError(RuntimeError):
    """Non-finite gradient; carries the last finite state for diagnostics."""

    def __init__(self, message: str, net: GeneratorNet, adam: AdamState, iteration: int):
        super().__init__(message)
        self.net = net
        self.adam = adam
        self.iteration = iteration


def train(cfg: TrainConfig) -> TrainResult:
    """Dispatch on objective and environment kind."""
    env = make_env(cfg.environment, cfg.env_options)
    if cfg.objective == "policy":
        return train_policy_baseline(cfg, env)
    if env.continuous:
        if cfg.objective == "reinforce":
            raise ValueError("reinforce is a discrete-environment baseline")
        return train_continuous(cfg, env)
    return train_discrete(cfg, env)


def _meta(cfg: TrainConfig, env, kind: str) -> dict:
    meta = {
        "environment": cfg.environment,
        "env_options": dict(cfg.env_options),
        "objective": cfg.objective,
        "m": cfg.m,
        "generator": kind,
        "sigma_velocity": cfg.sigma_velocity,
        "sigma_angle": cfg.sigma_angle,
        "seed": cfg.seed,
    }
    if kind == "policy":
        meta["policy_side"] = cfg.policy_side
    return meta


def _finite_or_raise(grad, net, adam, it) -> None:
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergedError(f"non-finite gradient at iteration {it}", net, adam, it)


def train_continuous(cfg: TrainConfig, env=None) -> TrainResult:
    """Generator training on a continuous environment (any utility kind)."""
    env = env or make_env(cfg.environment, cfg.env_options)
    if not env.continuous:
        raise ValueError(f"{cfg.environment} is not a continuous environment")
    if cfg.objective not in UTILITY_KINDS:
        raise ValueError(f"objective {cfg.objective!r} is not a utility kind")
    model = ExecutionModel(cfg.sigma_velocity, cfg.sigma_angle)
    rng = substream(cfg.seed, 0)
    net = init_glorot(mlp(env.encoded_size, cfg.hidden, 2 * cfg.m, "sigmoid"),
                      substream(cfg.seed, 1))
    adam = AdamState.zeros(net.params.size)
    result = TrainResult(net, adam, [], meta=_meta(cfg, env, "net"))
    b, m, o = cfg.minibatch, cfg.m, cfg.outcomes_per_action
    turns_m = np.full(m, float(GENERATED_TURN))
    turns_mo = np.full(m * o, float(GENERATED_TURN))
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for it in range(cfg.iterations):
            states = [env.sample_state(rng) for _ in range(b)]
            encoded = np.stack([env.encode(s) for s in states])
            y, tape = forward(net, encoded)
            va = y.reshape(b, m, 2)
            executed = np.repeat(va, o, axis=1).reshape(b * m * o, 2)
            noise = rng.standard_normal((b * m * o, 2))
            noise[:, 0] *= model.sigma_velocity
            noise[:, 1] *= model.sigma_angle
            noisy = np.clip(executed + noise, 0.0, 1.0).reshape(b, m * o, 2)

            def run(i: int) -> np.ndarray:
                return env.reward_batch(states[i], noisy[i], turns_mo)

            if pool is None:
                rewards = [run(i) for i in range(b)]
            else:
                rewards = list(pool.map(run, range(b)))

            g_out = np.zeros((b, 2 * m))
            total_u = 0.0
            for i in range(b):
                samples = SampleSet.from_arrays(noisy[i], turns_mo, rewards[i])
                g, bd, _, _ = output_semi_gradient(
                    va[i], turns_m, samples, model, cfg.objective, cfg.temperature
                )
                g_out[i] = g.reshape(-1)
                total_u += bd.total
            grad = backward(tape, g_out) / b
            _finite_or_raise(grad, net, adam, it)
            params, adam = adam_step(net.params, -grad, adam, cfg.lr, cfg.weight_decay)
            net = net.with_params(params)
            result.metrics.append((it, total_u / b, float(np.linalg.norm(grad))))
            if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                result.snapshots.append((it + 1, params.copy()))
    finally:
        if pool is not None:
            pool.shutdown()
    result.net = net
    result.adam = adam
    return result


def train_discrete(cfg: TrainConfig, env=None) -> TrainResult:
    """Head-policy training on the location game (utility kinds + reinforce)."""
    env = env or make_env(cfg.environment, cfg.env_options)
    if env.continuous:
        raise ValueError(f"{cfg.environment} is not a discrete environment")
    n = env.n_cells
    heads = 1 if cfg.objective == "reinforce" else cfg.m
    rng = substream(cfg.seed, 0)
    net = init_glorot(mlp(env.encoded_size, cfg.hidden, heads * n, "linear", heads),
                      substream(cfg.seed, 1))
    adam = AdamState.zeros(net.params.size)
    result = TrainResult(net, adam, [], meta=_meta(cfg, env, "heads"))
    b = cfg.minibatch
    for it in range(cfg.iterations):
        states = [env.sample_state(rng) for _ in range(b)]
        encoded = np.stack([env.encode(s) for s in states])
        y, tape = forward(net, encoded)
        logits = y.reshape(b, heads, n)
        g_out = np.zeros((b, heads * n))
        total_u = 0.0
        for i in range(b):
            probs = softmax_rows(logits[i])
            if cfg.objective == "reinforce":
                actions = [sample_cells(probs[0], env.k, rng) for _ in range(cfg.m)]
                q = env.reward_cells(states[i], np.array(actions))
                g = np.zeros(n)
                for cells, r in zip(actions, q):
                    g += r * tuple_logprob_logit_grad(probs[0], cells)
                g_out[i] = g / cfg.m
                total_u += float(q.mean())
            else:
                actions = [sample_cells(probs[h], env.k, rng) for h in range(heads)]
                q = env.reward_cells(states[i], np.array(actions))
                w = estimator_weights(cfg.objective, q, cfg.temperature)
                for h in range(heads):
                    if w[h] != 0.0:
                        g_out[i, h * n : (h + 1) * n] = w[h] * tuple_logprob_logit_grad(
                            probs[h], actions[h]
                        )
                total_u += utility(cfg.objective, q, cfg.temperature).total
        grad = backward(tape, g_out) / b
        _finite_or_raise(grad, net, adam, it)
        params, adam = adam_step(net.params, -grad, adam, cfg.lr, cfg.weight_decay)
        net = net.with_params(params)
        result.metrics.append((it, total_u / b, float(np.linalg.norm(grad))))
        if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            result.snapshots.append((it + 1, params.copy()))
    result.net = net
    result.adam = adam
    return result


def train_policy_baseline(cfg: TrainConfig, env=None) -> TrainResult:
    """Distill KR-UCB's visit distribution into a grid policy.

    Per state: plan with KR-UCB over the cell centers of a policy_side x
    policy_side action grid, normalize the per-cell visit counts into a
    target, and descend the cross-entropy to the net's grid distribution.
    """
    env = env or make_env(cfg.environment, cfg.env_options)
    if not env.continuous:
        raise ValueError("the distillation baseline needs a continuous environment")
    model = ExecutionModel(cfg.sigma_velocity, cfg.sigma_angle)
    side = cfg.policy_side
    n = side * side
    centers = policy_cell_centers(side)
    candidates = [
        ContinuousAction(float(v), float(a), GENERATED_TURN) for v, a in centers
    ]
    rng = substream(cfg.seed, 0)
    net = init_glorot(mlp(env.encoded_size, cfg.hidden, n, "linear"),
                      substream(cfg.seed, 1))
    adam = AdamState.zeros(net.params.size)
    result = TrainResult(net, adam, [], meta=_meta(cfg, env, "policy"))
    b = cfg.minibatch
    no_expand = ExpansionConfig(threshold=math.inf, cap=0)
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for it in range(cfg.iterations):
            states = [env.sample_state(rng) for _ in range(b)]
            encoded = np.stack([env.encode(s) for s in states])

            def target(i: int) -> np.ndarray:
                res = kr_ucb_plan(
                    env, states[i], candidates, cfg.policy_budget, cfg.policy_c,
                    model, no_expand, substream(cfg.seed, 2, it, i),
                )
                return res.stats.counts / res.stats.counts.sum()

            if pool is None:
                targets = [target(i) for i in range(b)]
            else:
                targets = list(pool.map(target, range(b)))

            y, tape = forward(net, encoded)
            g_out = np.zeros((b, n))
            total_loss = 0.0
            for i in range(b):
                rho = softmax_rows(y[i][None, :])[0]
                loss, g = distillation_loss_gradient(
                    rho, targets[i], cfg.weight_decay, net.params
                )
                g_out[i] = g
                total_loss += loss
            grad = backward(tape, g_out) / b
            _finite_or_raise(grad, net, adam, it)
            params, adam = adam_step(net.params, grad, adam, cfg.lr, cfg.weight_decay)
            net = net.with_params(params)
            result.metrics.append((it, total_loss / b, float(np.linalg.norm(grad))))
            if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                result.snapshots.append((it + 1, params.copy()))
    finally:
        if pool is not None:
            pool.shutdown()
    result.net = net
    result.adam = adam
    return result
