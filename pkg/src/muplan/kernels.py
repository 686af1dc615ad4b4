"""Kernel regression over planner samples, using execution noise as the kernel.

The kernel between two actions is the product of per-dimension Gaussian
densities of the execution model in normalized coordinates; actions with
different turns never share mass. Estimates are Nadaraya-Watson weighted
means of observed rewards, and the density (total kernel weight) doubles as
a soft visit count for KR-UCB.
"""

from __future__ import annotations

import math

import numpy as np

from .core import ContinuousAction, ExecutionModel, SampleSet

__all__ = [
    "DegenerateDensityError",
    "DENSITY_FLOOR",
    "kernel",
    "pairwise_weights",
    "kernel_weights",
    "estimate",
    "estimate_many",
    "estimate_gradient",
    "gradient_many",
]

DENSITY_FLOOR = 1e-300


class DegenerateDensityError(ValueError):
    """Raised when a kernel estimate rests on (numerically) zero density."""


def kernel(model: ExecutionModel, a: ContinuousAction, b: ContinuousAction) -> float:
    """Density of executing `b` when `a` was selected; peak 1/(2*pi*sv*sa)."""
    w = pairwise_weights(
        a.as_array()[None, :], np.array([a.turn], dtype=np.float64),
        b.as_array()[None, :], np.array([b.turn], dtype=np.float64),
        model,
    )
    return float(w[0, 0])


def pairwise_weights(
    va_q: np.ndarray,
    turn_q: np.ndarray,
    va_s: np.ndarray,
    turn_s: np.ndarray,
    model: ExecutionModel,
) -> np.ndarray:
    """(mq, ms) kernel weights between query rows and sample rows."""
    sv, sa = model.sigma_velocity, model.sigma_angle
    if sv <= 0.0 or sa <= 0.0:
        raise ValueError("kernel needs strictly positive noise widths")
    va_q = np.atleast_2d(np.asarray(va_q, dtype=np.float64))
    va_s = np.atleast_2d(np.asarray(va_s, dtype=np.float64))
    turn_q = np.asarray(turn_q, dtype=np.float64).reshape(-1)
    turn_s = np.asarray(turn_s, dtype=np.float64).reshape(-1)
    zv = (va_s[None, :, 0] - va_q[:, 0:1]) / sv
    za = (va_s[None, :, 1] - va_q[:, 1:2]) / sa
    w = np.exp(-0.5 * (zv * zv + za * za)) / (2.0 * math.pi * sv * sa)
    w[turn_q[:, None] != turn_s[None, :]] = 0.0
    return w


def kernel_weights(
    va: np.ndarray, turn: np.ndarray, samples: SampleSet, model: ExecutionModel
) -> np.ndarray:
    """(m, n) kernel weights between m query actions and n stored outcomes."""
    s_va, s_turn, _ = samples.as_arrays()
    return pairwise_weights(va, turn, s_va, s_turn, model)


def estimate(
    samples: SampleSet, action: ContinuousAction, model: ExecutionModel
) -> tuple[float, float]:
    """(q_hat, density) at `action`; underflowed density reports (0.0, 0.0)."""
    q, w = estimate_many(action.as_array(), np.array([action.turn]), samples, model)
    return float(q[0]), float(w[0])


def estimate_many(
    va: np.ndarray, turn: np.ndarray, samples: SampleSet, model: ExecutionModel
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (q_hat, density) for m query actions."""
    if len(samples) == 0:
        raise ValueError("cannot estimate from an empty sample set")
    w = kernel_weights(va, turn, samples, model)
    _, _, r = samples.as_arrays()
    dens = w.sum(axis=1)
    ok = dens >= DENSITY_FLOOR
    q = np.zeros_like(dens)
    np.divide(w @ r, dens, out=q, where=ok)
    return np.where(ok, q, 0.0), np.where(ok, dens, 0.0)


def estimate_gradient(
    samples: SampleSet, action: ContinuousAction, model: ExecutionModel
) -> tuple[float, float]:
    """(dq_hat/dvelocity, dq_hat/dangle) at `action`, outcomes held fixed."""
    g, ok = gradient_many(action.as_array(), np.array([action.turn]), samples, model)
    if not ok[0]:
        raise DegenerateDensityError(
            f"density underflow at action ({action.velocity}, {action.angle})"
        )
    return float(g[0, 0]), float(g[0, 1])


def gradient_many(
    va: np.ndarray, turn: np.ndarray, samples: SampleSet, model: ExecutionModel
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized kernel-regression gradients.

    Returns (m, 2) gradients and an (m,) validity mask; rows with underflowed
    density are zero and flagged invalid rather than raising, so batch callers
    can skip them.
    """
    if len(samples) == 0:
        raise ValueError("cannot estimate from an empty sample set")
    w = kernel_weights(va, turn, samples, model)
    s_va, _, r = samples.as_arrays()
    va = np.atleast_2d(np.asarray(va, dtype=np.float64))
    dens = w.sum(axis=1)
    ok = dens >= DENSITY_FLOOR
    safe = np.where(ok, dens, 1.0)
    q = (w @ r) / safe
    resid = r[None, :] - q[:, None]
    sv2 = model.sigma_velocity**2
    sa2 = model.sigma_angle**2
    gv = ((w * resid) @ s_va[:, 0] - (w * resid).sum(axis=1) * va[:, 0]) / (sv2 * safe)
    ga = ((w * resid) @ s_va[:, 1] - (w * resid).sum(axis=1) * va[:, 1]) / (sa2 * safe)
    g = np.stack([gv, ga], axis=1)
    g[~ok] = 0.0
    return g, ok
