"""Federated training engine: client-local updates, FedAvg, global eval."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import AdamState, ModelParams, adam_step, backward, forward
from .numerics import digamma, ln_gamma, trigamma

__all__ = [
    "ClientState",
    "RoundLog",
    "local_train",
    "fedavg_aggregate",
    "evaluate_global",
]

MAX_ANNOTATION_RATIO = 0.85


@dataclass
class ClientState:
    """One client's dataset view, annotation bookkeeping and local model."""

    client_id: int
    features: np.ndarray  # (N_train, dim)
    labels: np.ndarray  # (N_train,)
    labeled: set[int] = field(default_factory=set)
    unlabeled: set[int] = field(default_factory=set)
    local_model: ModelParams | None = None
    budget: int = 0

    def __post_init__(self):
        if self.labeled & self.unlabeled:
            raise ValueError("labeled and unlabeled sets must be disjoint")
        n = self.features.shape[0]
        if self.labeled | self.unlabeled != set(range(n)):
            raise ValueError("labeled and unlabeled sets must cover all train indices")

    @property
    def annotation_ratio(self) -> float:
        return len(self.labeled) / (len(self.labeled) + len(self.unlabeled))

    def labeled_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.array(sorted(self.labeled), dtype=int)
        return self.features[idx], self.labels[idx]


@dataclass(frozen=True)
class RoundLog:
    fal_round: int
    comm_round: int
    client_losses: dict[int, float]
    global_acc: float
    global_bma: float


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def batch_total_loss(
    logits: np.ndarray, y_onehot: np.ndarray, lam: float
) -> tuple[float, np.ndarray]:
    """Vectorized mean evidential loss (CE task + regularizer) over a batch.

    Matches total_loss(task_kind="ce") per row; kept array-wise because the
    training loop calls this on every step.
    """
    z = np.asarray(logits, dtype=float)
    y = np.asarray(y_onehot, dtype=float)
    n, c = z.shape
    alpha = np.maximum(z, 0.0) + 1.0
    s = alpha.sum(axis=1, keepdims=True)
    gate = (z > 0.0).astype(float)

    ce = np.sum(y * (digamma(s) - digamma(alpha)), axis=1)
    ce_grad = (trigamma(s) - y * trigamma(alpha)) * gate

    alpha_t = y + (1.0 - y) * alpha
    s_t = alpha_t.sum(axis=1, keepdims=True)
    kl = (
        ln_gamma(s_t[:, 0])
        - float(ln_gamma(float(c)))
        - np.sum(ln_gamma(alpha_t), axis=1)
        + np.sum((alpha_t - 1.0) * (digamma(alpha_t) - digamma(s_t)), axis=1)
    )
    kl_grad = (
        (alpha_t - 1.0) * trigamma(alpha_t) - (s_t - c) * trigamma(s_t)
    ) * (1.0 - y) * gate
    f = z.sum(axis=1, keepdims=True)
    reg = kl - (c / s[:, 0]) * f[:, 0]
    reg_grad = kl_grad - c / s + (c / s**2) * f * gate

    value = float(np.mean(ce + lam * reg))
    grad = (ce_grad + lam * reg_grad) / n
    return value, grad


def batch_loss_and_grads(
    p: ModelParams, x: np.ndarray, y_onehot: np.ndarray, lam: float
) -> tuple[float, ModelParams]:
    """Mean evidential loss over a batch and its parameter gradients."""
    cache = forward(p, x)
    value, grad_logits = batch_total_loss(cache.logits, y_onehot, lam)
    grads = backward(p, cache, grad_logits)
    return value, grads


def local_train(
    client: ClientState,
    global_model: ModelParams,
    steps: int,
    lam: float,
    lr: float,
    batch_size: int = 32,
    weight_decay: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> tuple[ModelParams, float]:
    """Train a copy of the global model on the client's labeled set.

    Returns the new local params and the mean training loss over the run;
    the client's stored local model is updated in place.
    """
    if not client.labeled:
        raise RuntimeError(f"client {client.client_id} has no labeled samples")
    x, labels = client.labeled_arrays()
    n_classes = global_model.arch[-1]
    y = _one_hot(labels, n_classes)
    rng = rng or np.random.default_rng(0)
    params = ModelParams.from_flat(global_model.arch, global_model.flat())
    state = AdamState.fresh(params.n_params, lr=lr, weight_decay=weight_decay)
    losses = []
    for _ in range(steps):
        idx = rng.choice(x.shape[0], size=min(batch_size, x.shape[0]), replace=False)
        loss, grads = batch_loss_and_grads(params, x[idx], y[idx], lam)
        params, state = adam_step(state, params, grads)
        losses.append(loss)
    client.local_model = params
    return params, float(np.mean(losses)) if losses else 0.0


def fedavg_aggregate(entries: list[tuple[ModelParams, float]]) -> ModelParams:
    """Weighted mean of parameter snapshots, weights normalized to sum 1."""
    if not entries:
        raise ValueError("fedavg_aggregate needs at least one entry")
    arch = entries[0][0].arch
    weights = np.array([w for _, w in entries], dtype=float)
    if np.any(weights <= 0):
        raise ValueError("aggregation weights must be positive")
    for p, _ in entries:
        if p.arch != arch:
            raise ValueError(f"architecture mismatch: {p.arch} vs {arch}")
    weights = weights / weights.sum()
    flat = sum(w * p.flat() for (p, _), w in zip(entries, weights))
    return ModelParams.from_flat(arch, flat)


def evaluate_global(p: ModelParams, test_sets: list[tuple[np.ndarray, np.ndarray]]) -> dict:
    """Accuracy, balanced multi-class accuracy and per-client accuracy.

    Predictions are the argmax of the evidential posterior; since
    alpha = ReLU(z) + 1 is monotone in z, this matches argmax of the logits.
    """
    if not test_sets or any(x.shape[0] == 0 for x, _ in test_sets):
        raise ValueError("test partitions must be non-empty")
    n_classes = p.arch[-1]
    correct_total = 0
    n_total = 0
    per_class_correct = np.zeros(n_classes)
    per_class_count = np.zeros(n_classes)
    per_client_acc = []
    for x, labels in test_sets:
        logits = forward(p, x).logits
        alpha = np.maximum(logits, 0.0) + 1.0
        preds = np.argmax(alpha / alpha.sum(axis=1, keepdims=True), axis=1)
        hits = preds == labels
        per_client_acc.append(float(hits.mean()))
        correct_total += int(hits.sum())
        n_total += labels.size
        for c in range(n_classes):
            mask = labels == c
            per_class_count[c] += mask.sum()
            per_class_correct[c] += hits[mask].sum()
    seen = per_class_count > 0
    recalls = per_class_correct[seen] / per_class_count[seen]
    return {
        "accuracy": correct_total / n_total,
        "bma": float(recalls.mean()),
        "per_client_accuracy": per_client_acc,
    }
