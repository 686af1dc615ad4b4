"""Candidate generators: trained nets, fixed grids, and policy baselines.

A continuous generator is a callable state -> list[ContinuousAction]; a
discrete generator is a callable (state, rng) -> list[DiscreteAction]. The
turn of generated continuous actions is fixed; curl is symmetric, so one
handedness spans the reachable outcomes.
"""

from __future__ import annotations

import numpy as np

from .core import ContinuousAction, DiscreteAction
from .network import GeneratorNet, forward
from .objectives import HeadPolicies, sample_cells, softmax_rows

__all__ = [
    "GENERATED_TURN",
    "decode_actions",
    "net_generator",
    "grid_candidates",
    "grid_generator",
    "policy_cell_centers",
    "policy_generator",
    "head_policies",
    "discrete_net_generator",
]

GENERATED_TURN = 1


def decode_actions(outputs: np.ndarray, turn: int = GENERATED_TURN) -> list[ContinuousAction]:
    """2m sigmoid outputs, interleaved (velocity, angle), to m actions."""
    outputs = np.asarray(outputs, dtype=np.float64).reshape(-1)
    if outputs.size % 2 != 0:
        raise ValueError(f"need an even number of outputs, got {outputs.size}")
    if not np.all(np.isfinite(outputs)):
        raise ValueError("non-finite generator outputs")
    va = outputs.reshape(-1, 2)
    return [ContinuousAction(float(v), float(a), turn) for v, a in va]


def net_generator(net: GeneratorNet, env):
    """Deterministic candidate generator from a trained continuous net."""

    def generate(state) -> list[ContinuousAction]:
        y, _ = forward(net, env.encode(state))
        return decode_actions(y)

    return generate


def grid_candidates(m: int) -> list[ContinuousAction]:
    """State-independent baseline: bin centers of a velocity x angle grid.

    m is split into the most even factor pair, the larger count on velocity
    (the heavier-tailed axis)."""
    if m < 1:
        raise ValueError("need at least one candidate")
    rows = int(np.sqrt(m))
    while m % rows != 0:
        rows -= 1
    cols = m // rows
    nv, na = max(rows, cols), min(rows, cols)
    velocities = (np.arange(nv) + 0.5) / nv
    angles = (np.arange(na) + 0.5) / na
    return [
        ContinuousAction(float(v), float(a), GENERATED_TURN)
        for v in velocities
        for a in angles
    ]


def grid_generator(m: int):
    candidates = grid_candidates(m)

    def generate(state) -> list[ContinuousAction]:
        return list(candidates)

    return generate


def policy_cell_centers(side: int) -> np.ndarray:
    """(side*side, 2) centers of a square action-space discretization,
    row-major over (velocity, angle) bins."""
    if side < 1:
        raise ValueError("side must be positive")
    centers = (np.arange(side) + 0.5) / side
    vv, aa = np.meshgrid(centers, centers, indexing="ij")
    return np.stack([vv.ravel(), aa.ravel()], axis=1)


def policy_generator(net: GeneratorNet, env, m: int, side: int, mode: str = "top",
                     rng: np.random.Generator | None = None):
    """Candidates from a distilled grid policy.

    mode="top": centers of the m highest-probability cells (deterministic,
    ties to the lower row-major index). mode="sample": m distinct cells drawn
    without replacement from the policy (requires rng)."""
    if mode not in ("top", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampling mode needs an rng")
    centers = policy_cell_centers(side)
    if m > centers.shape[0]:
        raise ValueError(f"cannot pick {m} cells from a {side}x{side} grid")

    def generate(state) -> list[ContinuousAction]:
        y, _ = forward(net, env.encode(state))
        if y.size != centers.shape[0]:
            raise ValueError(
                f"policy net emits {y.size} cells, grid has {centers.shape[0]}"
            )
        if mode == "top":
            # softmax is monotone, so ranking raw logits is equivalent
            cells = np.argsort(-y, kind="stable")[:m]
        else:
            cells = sample_cells(softmax_rows(y), m, rng)
        return [
            ContinuousAction(float(centers[c, 0]), float(centers[c, 1]), GENERATED_TURN)
            for c in cells
        ]

    return generate


def head_policies(net: GeneratorNet, encoded: np.ndarray, heads: int | None = None) -> HeadPolicies:
    """Per-head cell distributions from a forward pass.

    A softmax output layer is used as-is; a linear output layer is split
    into `heads` blocks (default: the layer's head count) and normalized."""
    last = net.layers[-1]
    y, _ = forward(net, encoded)
    if last.activation == "softmax":
        return HeadPolicies(y.reshape(last.heads, -1))
    if last.activation != "linear":
        raise ValueError("head policies need a softmax or linear output layer")
    if heads is None:
        heads = last.heads
    if y.size % heads:
        raise ValueError(f"cannot split {y.size} outputs into {heads} heads")
    return HeadPolicies(softmax_rows(y.reshape(heads, -1)))


def discrete_net_generator(net: GeneratorNet, env, m: int):
    """Sampling generator for the location game.

    A net with m heads yields one action per head; a single-head net
    (the REINFORCE baseline) yields m draws from its one policy."""
    heads = net.layers[-1].heads

    def generate(state, rng: np.random.Generator) -> list[DiscreteAction]:
        policies = head_policies(net, env.encode(state))
        if heads == m:
            rows = policies.probs
        elif heads == 1:
            rows = np.repeat(policies.probs, m, axis=0)
        else:
            raise ValueError(f"net has {heads} heads; cannot produce {m} actions")
        return [DiscreteAction(sample_cells(row, env.k, rng)) for row in rows]

    return generate
