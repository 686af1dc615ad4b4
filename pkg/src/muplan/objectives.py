"""Set-valued utilities over candidate actions and their gradients.

Four utilities score a set of per-action values q: the mean ("sum"), the
max, a softmax-smoothed max, and the marginal utility ("mu") that sums each
action's clipped improvement over the running best. Marginal utility equals
the max in value but distributes gradient across every action that improves
the prefix, which is what makes it a useful training signal.

Continuous training differentiates kernel-regression estimates of q with
respect to the generated actions (outcomes held fixed) and chains through
the network. Discrete training uses score-function estimators: each head's
log-probability gradient is weighted by that head's clipped marginal
improvement, which is unbiased for the gradient of the expected set max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ExecutionModel, SampleSet
from .kernels import estimate_many, gradient_many
from .network import GeneratorNet, Tape, backward, forward

__all__ = [
    "UTILITY_KINDS",
    "softmax_rows",
    "UtilityBreakdown",
    "HeadPolicies",
    "utility",
    "sample_cells",
    "tuple_logprob",
    "tuple_logprob_logit_grad",
    "estimator_weights",
    "discrete_mu_gradient_estimate",
    "reinforce_gradient",
    "distillation_loss_gradient",
    "output_semi_gradient",
    "ContinuousGradient",
    "continuous_objective_gradient",
    "continuous_mu_gradient",
]

UTILITY_KINDS = ("sum", "max", "softmax", "mu")


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Shift-stable softmax along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class UtilityBreakdown:
    """Total utility plus the per-action weights its semi-gradient uses."""

    kind: str
    total: float
    coefficients: np.ndarray


def _mu_coefficients(q: np.ndarray) -> np.ndarray:
    c = np.zeros(q.size)
    c[0] = 1.0
    running = q[0]
    for i in range(1, q.size):
        if q[i] > running:
            c[i] = 1.0
            running = q[i]
    return c


def utility(kind: str, q, temperature: float = 0.1) -> UtilityBreakdown:
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.size == 0:
        raise ValueError("utility needs at least one action value")
    if kind == "sum":
        return UtilityBreakdown("sum", float(q.mean()), np.full(q.size, 1.0 / q.size))
    if kind == "max":
        i = int(np.argmax(q))
        coeff = np.zeros(q.size)
        coeff[i] = 1.0
        return UtilityBreakdown("max", float(q[i]), coeff)
    if kind == "softmax":
        if temperature <= 0.0:
            raise ValueError("softmax temperature must be positive")
        z = q / temperature
        z -= z.max()
        w = np.exp(z)
        w /= w.sum()
        total = float(w @ q)
        coeff = w * (1.0 + (q - total) / temperature)
        return UtilityBreakdown("softmax", total, coeff)
    if kind == "mu":
        total = q[0]
        running = q[0]
        for i in range(1, q.size):
            if q[i] > running:
                total += q[i] - running
                running = q[i]
        return UtilityBreakdown("mu", float(total), _mu_coefficients(q))
    raise ValueError(f"unknown utility kind {kind!r}")


@dataclass(frozen=True)
class HeadPolicies:
    """One categorical distribution over cells per generator head."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError(f"probs must be (heads, cells), got shape {p.shape}")
        if np.any(p < 0.0):
            raise ValueError("probabilities must be non-negative")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each head must sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def heads(self) -> int:
        return self.probs.shape[0]


def sample_cells(probs: np.ndarray, k: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Sample k distinct cells sequentially, renormalizing after each pick."""
    p = np.asarray(probs, dtype=np.float64).copy()
    if k < 1 or k > p.size:
        raise ValueError(f"cannot pick {k} distinct cells from {p.size}")
    cells = []
    for _ in range(k):
        z = p.sum()
        if z <= 0.0:
            raise ValueError("policy has no mass left to sample from")
        cells.append(int(rng.choice(p.size, p=p / z)))
        p[cells[-1]] = 0.0
    return tuple(cells)


def _pick_probs_and_tails(probs: np.ndarray, cells) -> tuple[np.ndarray, np.ndarray]:
    """Per-step pick probabilities p[c_t] and remaining mass Z_t."""
    p = np.asarray(probs, dtype=np.float64)
    k = len(cells)
    picks = np.empty(k)
    z = np.empty(k)
    used = 0.0
    seen = set()
    for t, c in enumerate(cells):
        if c in seen:
            raise ValueError(f"cell {c} repeated; sequential sampling cannot produce it")
        seen.add(c)
        z[t] = 1.0 - used
        picks[t] = p[c]
        if picks[t] <= 0.0 or z[t] <= 0.0:
            raise ValueError(f"action {tuple(cells)} has zero probability")
        used += p[c]
    return picks, z


def tuple_logprob(probs: np.ndarray, cells) -> float:
    """log probability of drawing `cells` in order without replacement."""
    picks, z = _pick_probs_and_tails(probs, cells)
    return float(np.log(picks).sum() - np.log(z).sum())


def tuple_logprob_logit_grad(probs: np.ndarray, cells) -> np.ndarray:
    """Gradient of tuple_logprob w.r.t. the logits behind `probs`.

    With p = softmax(logits) and Z_t the mass left before step t:
    d log pi / d logit_j
      = sum_t (1[j = c_t] - p_j)
      + sum_s p_{c_s} * (sum_{t > s} 1/Z_t) * (1[j = c_s] - p_j).
    The second sum undoes the renormalization's pull on already-picked cells.
    """
    p = np.asarray(probs, dtype=np.float64)
    picks, z = _pick_probs_and_tails(probs, cells)
    k = len(cells)
    inv = 1.0 / z
    # tail[s] = sum of 1/Z_t for t > s
    tail = np.concatenate([np.cumsum(inv[::-1])[::-1][1:], [0.0]])
    g = -float(k) * p.copy()
    for t, c in enumerate(cells):
        g[c] += 1.0
        beta = picks[t] * tail[t]
        g[c] += beta
        g -= beta * p
    return g


def estimator_weights(kind: str, q, temperature: float = 0.1) -> np.ndarray:
    """Per-head score-function weights for the sampled-set estimators.

    mu:      head i earns its clipped improvement over the prefix max.
    max:     every head earns the set max minus the prefix max before it
             (a valid baseline, since it ignores the head's own sample).
    sum:     each head earns its own value / m.
    softmax: every head earns the full smoothed value (joint credit).
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.size == 0:
        raise ValueError("need at least one sampled value")
    if kind == "mu":
        w = np.empty(q.size)
        w[0] = q[0]
        running = q[0]
        for i in range(1, q.size):
            w[i] = max(0.0, q[i] - running)
            running = max(running, q[i])
        return w
    if kind == "max":
        m = float(q.max())
        w = np.empty(q.size)
        running = -math.inf
        for i in range(q.size):
            w[i] = m - (0.0 if running == -math.inf else running)
            running = max(running, q[i])
        return w
    if kind == "sum":
        return q / q.size
    if kind == "softmax":
        return np.full(q.size, utility("softmax", q, temperature).total)
    raise ValueError(f"unknown estimator kind {kind!r}")


def discrete_mu_gradient_estimate(
    policies: HeadPolicies,
    actions,
    q,
    logprob_grads: np.ndarray,
) -> np.ndarray:
    """Single-sample estimate of the marginal-utility gradient.

    `actions` holds one sampled cell tuple per head, `q` their exact rewards,
    and `logprob_grads` stacks each head's gradient of log pi_i(action_i)
    (any parameterization). Heads are weighted by clipped improvement over
    the prefix max; the result is unbiased for the gradient of E[max].
    """
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    grads = np.asarray(logprob_grads, dtype=np.float64)
    if len(actions) != policies.heads or q.size != policies.heads:
        raise ValueError("need one action and reward per head")
    if grads.shape[0] != policies.heads:
        raise ValueError("need one log-prob gradient per head")
    for i, action in enumerate(actions):
        cells = action.cells if hasattr(action, "cells") else action
        tuple_logprob(policies.probs[i], cells)  # raises on zero probability
    w = estimator_weights("mu", q)
    return w @ grads.reshape(policies.heads, -1)


def reinforce_gradient(probs: np.ndarray, actions, rewards) -> np.ndarray:
    """Mean of reward-weighted log-prob gradients for one categorical head,
    with respect to the head's logits."""
    rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if len(actions) == 0 or rewards.size != len(actions):
        raise ValueError("need one reward per sampled action")
    g = np.zeros_like(np.asarray(probs, dtype=np.float64))
    for action, r in zip(actions, rewards):
        cells = action.cells if hasattr(action, "cells") else action
        g += r * tuple_logprob_logit_grad(probs, cells)
    return g / rewards.size


def distillation_loss_gradient(
    rho: np.ndarray,
    pi: np.ndarray,
    weight_decay: float = 0.0,
    params: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Cross-entropy -sum(pi log rho) and its gradient w.r.t. rho's logits.

    The reported loss includes weight_decay * ||params||^2 when params are
    given; the corresponding shrinkage is applied by the optimizer, so the
    returned gradient is the cross-entropy part only.
    """
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    pi = np.asarray(pi, dtype=np.float64).reshape(-1)
    if rho.shape != pi.shape:
        raise ValueError("rho and pi must be the same length")
    for name, p in (("rho", rho), ("pi", pi)):
        if np.any(p < 0.0) or abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a distribution")
    support = pi > 0.0
    if np.any(rho[support] <= 0.0):
        raise ValueError("rho must be positive wherever pi has mass")
    loss = -float(pi[support] @ np.log(rho[support]))
    if params is not None:
        loss += weight_decay * float(params @ params)
    return loss, rho - pi


@dataclass
class ContinuousGradient:
    grad: np.ndarray
    breakdown: UtilityBreakdown
    q_hat: np.ndarray
    density_ok: np.ndarray


def output_semi_gradient(
    va: np.ndarray,
    turn: np.ndarray,
    samples: SampleSet,
    model: ExecutionModel,
    kind: str = "mu",
    temperature: float = 0.1,
) -> tuple[np.ndarray, UtilityBreakdown, np.ndarray, np.ndarray]:
    """Semi-gradient of the utility w.r.t. the m generated actions.

    Values come from kernel regression over `samples` (outcomes fixed);
    actions whose density underflows contribute zero gradient and are
    flagged. Returns (per-action (m,2) gradient, breakdown, q_hat, ok)."""
    q_hat, dens = estimate_many(va, turn, samples, model)
    ok = dens > 0.0
    bd = utility(kind, q_hat, temperature)
    grads, _ = gradient_many(va, turn, samples, model)
    g = bd.coefficients[:, None] * grads
    g[~ok] = 0.0
    return g, bd, q_hat, ok


def continuous_objective_gradient(
    net: GeneratorNet,
    encoded: np.ndarray,
    samples: SampleSet,
    model: ExecutionModel,
    kind: str = "mu",
    temperature: float = 0.1,
    turn: int = 1,
) -> ContinuousGradient:
    """Parameter gradient of the kernel-regression utility of the net's
    generated action set on one encoded state."""
    y, tape = forward(net, np.asarray(encoded, dtype=np.float64))
    if y.ndim != 1 or y.size % 2 != 0:
        raise ValueError("net must emit 2m outputs for one state")
    va = y.reshape(-1, 2)
    turns = np.full(va.shape[0], float(turn))
    g, bd, q_hat, ok = output_semi_gradient(va, turns, samples, model, kind, temperature)
    flat = backward(tape, g.reshape(-1))
    return ContinuousGradient(flat, bd, q_hat, ok)


def continuous_mu_gradient(
    net: GeneratorNet,
    encoded: np.ndarray,
    samples: SampleSet,
    model: ExecutionModel,
) -> ContinuousGradient:
    return continuous_objective_gradient(net, encoded, samples, model, "mu")
