"""Feed-forward generator networks on a flat parameter vector.

A network is a tuple of layer specs plus one float64 vector holding every
weight and bias, so the optimizer, checkpoints, and finite-difference tests
all see a single array. Forward returns the output and a tape; backward
turns an output gradient into a flat parameter gradient (summed over the
batch). Checkpoints are JSON with base64 little-endian float64 payloads and
round-trip bit for bit.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Var, backprop, softmax_blocks

__all__ = [
    "ACTIVATIONS",
    "LayerSpec",
    "GeneratorNet",
    "Tape",
    "AdamState",
    "Checkpoint",
    "mlp",
    "n_params",
    "init_glorot",
    "forward",
    "backward",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]

ACTIVATIONS = ("linear", "relu", "sigmoid", "softmax")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LayerSpec:
    in_size: int
    out_size: int
    activation: str = "linear"
    heads: int = 1

    def __post_init__(self) -> None:
        if self.in_size < 1 or self.out_size < 1:
            raise ValueError("layer sizes must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.heads < 1:
            raise ValueError("heads must be positive")
        if self.out_size % self.heads != 0:
            raise ValueError(
                f"{self.heads} heads need out_size divisible, got {self.out_size}"
            )

    @property
    def size(self) -> int:
        return self.in_size * self.out_size + self.out_size


def _check_layers(layers: tuple[LayerSpec, ...]) -> None:
    if not layers:
        raise ValueError("need at least one layer")
    for a, b in zip(layers, layers[1:]):
        if a.out_size != b.in_size:
            raise ValueError(f"layer sizes do not chain: {a.out_size} -> {b.in_size}")


def n_params(layers: tuple[LayerSpec, ...]) -> int:
    return sum(spec.size for spec in layers)


@dataclass
class GeneratorNet:
    layers: tuple[LayerSpec, ...]
    params: np.ndarray

    def __post_init__(self) -> None:
        self.layers = tuple(self.layers)
        _check_layers(self.layers)
        self.params = np.asarray(self.params, dtype=np.float64).reshape(-1)
        if self.params.size != n_params(self.layers):
            raise ValueError(
                f"expected {n_params(self.layers)} parameters, got {self.params.size}"
            )

    @property
    def in_size(self) -> int:
        return self.layers[0].in_size

    @property
    def out_size(self) -> int:
        return self.layers[-1].out_size

    def with_params(self, params: np.ndarray) -> "GeneratorNet":
        return GeneratorNet(self.layers, params)


def mlp(
    in_size: int,
    hidden: tuple[int, ...],
    out_size: int,
    output_activation: str,
    heads: int = 1,
) -> tuple[LayerSpec, ...]:
    """ReLU hidden stack with the given output activation."""
    sizes = [in_size, *hidden, out_size]
    layers = [
        LayerSpec(sizes[i], sizes[i + 1], "relu") for i in range(len(sizes) - 2)
    ]
    layers.append(LayerSpec(sizes[-2], sizes[-1], output_activation, heads))
    return tuple(layers)


def init_glorot(layers: tuple[LayerSpec, ...], rng: np.random.Generator) -> GeneratorNet:
    """Weights uniform in +-sqrt(6/(fan_in+fan_out)); biases zero."""
    layers = tuple(layers)
    _check_layers(layers)
    chunks = []
    for spec in layers:
        bound = np.sqrt(6.0 / (spec.in_size + spec.out_size))
        chunks.append(rng.uniform(-bound, bound, size=spec.in_size * spec.out_size))
        chunks.append(np.zeros(spec.out_size))
    return GeneratorNet(layers, np.concatenate(chunks))


@dataclass
class Tape:
    output: Var
    param_vars: list[tuple[Var, Var]]
    single: bool
    net: GeneratorNet
    used: bool = False


def forward(net: GeneratorNet, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    """Run the network on one input (in,) or a batch (B, in)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != net.in_size:
        raise ValueError(f"input width {x2.shape[1]} != {net.in_size}")
    if not np.all(np.isfinite(x2)):
        raise ValueError("input contains non-finite values")
    h = Var(x2)
    param_vars: list[tuple[Var, Var]] = []
    offset = 0
    for spec in net.layers:
        w_n = spec.in_size * spec.out_size
        w = Var(net.params[offset : offset + w_n].reshape(spec.in_size, spec.out_size))
        b = Var(net.params[offset + w_n : offset + spec.size])
        offset += spec.size
        param_vars.append((w, b))
        h = h @ w + b
        if spec.activation == "relu":
            h = h.relu()
        elif spec.activation == "sigmoid":
            h = h.sigmoid()
        elif spec.activation == "softmax":
            h = softmax_blocks(h, spec.heads)
    y = h.data[0] if single else h.data
    return y, Tape(h, param_vars, single, net)


def backward(tape: Tape, out_grad: np.ndarray) -> np.ndarray:
    """Flat parameter gradient of sum(output * out_grad); one use per tape."""
    if tape.used:
        raise ValueError("tape already consumed; run forward again")
    tape.used = True
    out_grad = np.asarray(out_grad, dtype=np.float64)
    if tape.single:
        if out_grad.shape != (tape.net.out_size,):
            raise ValueError(f"out_grad shape {out_grad.shape} does not match output")
        out_grad = out_grad[None, :]
    backprop(tape.output, out_grad)
    return np.concatenate(
        [np.concatenate([w.grad.ravel(), b.grad.ravel()]) for w, b in tape.param_vars]
    )


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(
    params: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[np.ndarray, AdamState]:
    """One descent step (callers negate the gradient to ascend); weight decay
    is decoupled shrinkage, not part of the moment estimates."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("params, grad, and state sizes must match")
    t = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS) - lr * weight_decay * params
    return new, AdamState(m, v, t)


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str, size: int) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(text), dtype="<f8").astype(np.float64)
    if arr.size != size:
        raise ValueError(f"checkpoint payload has {arr.size} values, expected {size}")
    return arr


@dataclass
class Checkpoint:
    net: GeneratorNet
    adam: AdamState | None
    iteration: int
    meta: dict = field(default_factory=dict)


def save_checkpoint(
    path: str | Path,
    net: GeneratorNet,
    adam: AdamState | None = None,
    iteration: int = 0,
    meta: dict | None = None,
) -> None:
    doc = {
        "format": "muplan-net-v1",
        "layers": [
            [s.in_size, s.out_size, s.activation, s.heads] for s in net.layers
        ],
        "params": _encode(net.params),
        "adam": None
        if adam is None
        else {"m": _encode(adam.m), "v": _encode(adam.v), "step": adam.step},
        "iteration": iteration,
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path: str | Path) -> Checkpoint:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "muplan-net-v1":
        raise ValueError(f"not a network checkpoint: {path}")
    layers = tuple(LayerSpec(i, o, a, h) for i, o, a, h in doc["layers"])
    size = n_params(layers)
    net = GeneratorNet(layers, _decode(doc["params"], size))
    adam = None
    if doc["adam"] is not None:
        adam = AdamState(
            _decode(doc["adam"]["m"], size),
            _decode(doc["adam"]["v"], size),
            int(doc["adam"]["step"]),
        )
    return Checkpoint(net, adam, int(doc["iteration"]), doc.get("meta", {}))
