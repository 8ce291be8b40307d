"""A small MLP with manual forward/backward passes and an Adam optimizer.

Parameters are value-semantic snapshots so they can be shipped between
clients and averaged; everything round-trips exactly through a flat vector.
The penultimate activation doubles as the feature embedding for the
diversity and core-set machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ModelParams",
    "ForwardCache",
    "AdamState",
    "init_params",
    "forward",
    "backward",
    "adam_step",
    "save_params",
    "load_params",
]

_CHECKPOINT_MAGIC = "feal-params-v1"


@dataclass(frozen=True)
class ModelParams:
    """Weights and biases of an MLP, plus its architecture descriptor."""

    arch: tuple[int, ...]
    weights: tuple[np.ndarray, ...]  # each (fan_in, fan_out)
    biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    @staticmethod
    def from_flat(arch: tuple[int, ...], flat: np.ndarray) -> "ModelParams":
        flat = np.asarray(flat, dtype=float)
        weights, biases = [], []
        pos = 0
        for fan_in, fan_out in zip(arch[:-1], arch[1:]):
            n = fan_in * fan_out
            weights.append(flat[pos : pos + n].reshape(fan_in, fan_out).copy())
            pos += n
            biases.append(flat[pos : pos + fan_out].copy())
            pos += fan_out
        if pos != flat.size:
            raise ValueError(f"flat vector length {flat.size} does not match arch {arch}")
        return ModelParams(arch=tuple(arch), weights=tuple(weights), biases=tuple(biases))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class ForwardCache:
    """Intermediate activations from one forward pass over a batch."""

    x: np.ndarray  # (N, in_dim)
    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]
    logits: np.ndarray  # (N, C)
    embedding: np.ndarray  # (N, last_hidden)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5

    @staticmethod
    def fresh(n_params: int, lr: float = 5e-4, weight_decay: float = 1e-5) -> "AdamState":
        return AdamState(
            m=np.zeros(n_params), v=np.zeros(n_params), lr=lr, weight_decay=weight_decay
        )


def init_params(arch, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    arch = tuple(int(a) for a in arch)
    if len(arch) < 3:
        raise ValueError("need at least one hidden layer (arch length >= 3)")
    if any(a <= 0 for a in arch):
        raise ValueError("layer widths must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(arch=arch, weights=tuple(weights), biases=tuple(biases))


def forward(p: ModelParams, x) -> ForwardCache:
    """Forward pass; accepts a single feature vector or an (N, in_dim) batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != p.arch[0]:
        raise ValueError(f"input width {h.shape[1]} does not match arch {p.arch}")
    pre, act = [], []
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(p.weights) - 1 else z
        act.append(h)
    return ForwardCache(
        x=x if not single else x[None, :],
        pre_activations=tuple(pre),
        activations=tuple(act),
        logits=act[-1][0] if single else act[-1],
        embedding=act[-2][0] if single else act[-2],
    )


def backward(p: ModelParams, cache: ForwardCache, grad_logits) -> ModelParams:
    """Backprop grad_logits through the cached pass; returns gradients shaped
    like the parameters. Batch gradients are summed; divide by N for a mean.
    """
    g = np.asarray(grad_logits, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != np.atleast_2d(cache.logits).shape:
        raise ValueError("grad_logits shape does not match cached logits")
    n_layers = len(p.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    delta = g
    for i in range(n_layers - 1, -1, -1):
        inp = cache.x if i == 0 else cache.activations[i - 1]
        grad_w[i] = inp.T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ p.weights[i].T) * (cache.pre_activations[i - 1] > 0.0)
    return ModelParams(arch=p.arch, weights=tuple(grad_w), biases=tuple(grad_b))


def adam_step(state: AdamState, p: ModelParams, g: ModelParams) -> tuple[ModelParams, AdamState]:
    """One Adam update with bias correction and decoupled weight decay."""
    theta = p.flat()
    grad = g.flat()
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient in adam_step")
    if grad.size != state.m.size:
        raise ValueError("gradient length does not match optimizer state")
    t = state.step + 1
    theta = theta * (1.0 - state.lr * state.weight_decay)
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return ModelParams.from_flat(p.arch, theta), replace(state, m=m, v=v, step=t)


def save_params(p: ModelParams, path):
    """Text checkpoint: magic line, architecture header, flat parameters."""
    flat = p.flat()
    with open(path, "w") as fh:
        fh.write(f"{_CHECKPOINT_MAGIC}\n")
        fh.write(" ".join(str(a) for a in p.arch) + "\n")
        for value in flat:
            fh.write(f"{value.hex()}\n")


def load_params(path) -> ModelParams:
    with open(path) as fh:
        magic = fh.readline().strip()
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"unrecognized checkpoint header {magic!r}")
        arch = tuple(int(tok) for tok in fh.readline().split())
        flat = np.array([float.fromhex(line.strip()) for line in fh if line.strip()])
    return ModelParams.from_flat(arch, flat)
