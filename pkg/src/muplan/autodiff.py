"""Tiny array-valued reverse-mode tape.

Each Var wraps a float64 ndarray, remembers its parents, and carries a
closure that pushes its gradient back to them. `backprop` topologically
sorts the graph once and runs the closures in reverse. Only the handful of
operations the generator networks need are implemented; matmul is strictly
2D to keep the gradient rules obvious.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Var", "stop_gradient", "softmax_blocks", "backprop"]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Var:
    __slots__ = ("data", "grad", "_prev", "_backward")

    def __init__(self, data, _prev: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self._prev = _prev
        self._backward = lambda: None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __add__(self, other: "Var") -> "Var":
        out = Var(self.data + other.data, (self, other))

        def _backward():
            self.grad += _unbroadcast(out.grad, self.data.shape)
            other.grad += _unbroadcast(out.grad, other.data.shape)

        out._backward = _backward
        return out

    def __mul__(self, other: "Var") -> "Var":
        out = Var(self.data * other.data, (self, other))

        def _backward():
            self.grad += _unbroadcast(out.grad * other.data, self.data.shape)
            other.grad += _unbroadcast(out.grad * self.data, other.data.shape)

        out._backward = _backward
        return out

    def __matmul__(self, other: "Var") -> "Var":
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul supports 2D operands only")
        out = Var(self.data @ other.data, (self, other))

        def _backward():
            self.grad += out.grad @ other.data.T
            other.grad += self.data.T @ out.grad

        out._backward = _backward
        return out

    def relu(self) -> "Var":
        out = Var(np.maximum(self.data, 0.0), (self,))

        def _backward():
            out_grad = out.grad
            self.grad += out_grad * (self.data > 0.0)

        out._backward = _backward
        return out

    def sigmoid(self) -> "Var":
        x = self.data
        s = np.empty_like(x)
        pos = x >= 0.0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        s[~pos] = e / (1.0 + e)
        out = Var(s, (self,))

        def _backward():
            self.grad += out.grad * s * (1.0 - s)

        out._backward = _backward
        return out


def stop_gradient(v: Var) -> Var:
    """Value passes through; gradient does not."""
    return Var(v.data, ())


def softmax_blocks(v: Var, blocks: int) -> Var:
    """Softmax over each of `blocks` equal contiguous chunks of the last axis."""
    size = v.data.shape[-1]
    if size % blocks != 0:
        raise ValueError(f"cannot split {size} outputs into {blocks} blocks")
    shaped = v.data.reshape(*v.data.shape[:-1], blocks, size // blocks)
    z = shaped - shaped.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Var(p.reshape(v.data.shape), (v,))

    def _backward():
        g = out.grad.reshape(p.shape)
        inner = (g * p).sum(axis=-1, keepdims=True)
        v.grad += ((g - inner) * p).reshape(v.data.shape)

    out._backward = _backward
    return out


def backprop(root: Var, seed: np.ndarray) -> None:
    """Accumulate d(root.data . seed)/d(node) into every node's .grad."""
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != root.data.shape:
        raise ValueError(f"seed shape {seed.shape} != output shape {root.data.shape}")
    topo: list[Var] = []
    visited: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in visited:
                stack.append((parent, False))
    root.grad = root.grad + seed
    for node in reversed(topo):
        node._backward()
