"""Evidential training objectives.

Each loss returns its value together with the analytic gradient with respect
to the raw logits. Concentrations always come from alpha = ReLU(z) + 1, so
gradients flowing through alpha are gated by 1[z > 0]; the evidence
regularizer additionally touches the raw logits directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evidential import DirichletPosterior
from .numerics import digamma, ln_gamma, trigamma

__all__ = [
    "LossResult",
    "SegBatch",
    "task_loss_ce",
    "task_loss_dice",
    "reg_loss",
    "total_loss",
]


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_logits: np.ndarray


@dataclass(frozen=True)
class SegBatch:
    """Per-pixel logits and one-hot labels for a segmentation sample."""

    logits: np.ndarray  # (M, C)
    labels: np.ndarray  # (M, C) one-hot

    def __post_init__(self):
        z = np.asarray(self.logits, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if z.ndim != 2 or z.shape[0] < 1:
            raise ValueError("logits must be (M, C) with M >= 1")
        if y.shape != z.shape:
            raise ValueError("labels shape must match logits")
        _check_one_hot(y)
        object.__setattr__(self, "logits", z)
        object.__setattr__(self, "labels", y)

    @property
    def alphas(self) -> np.ndarray:
        return np.maximum(self.logits, 0.0) + 1.0


def _check_one_hot(y: np.ndarray):
    if not (np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=-1) == 1.0)):
        raise ValueError("labels must be one-hot")


def _as_one_hot(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (n_classes,):
        raise ValueError(f"label length {y.shape} does not match {n_classes} classes")
    _check_one_hot(y[None, :])
    return y


def _relu_gate(logits: np.ndarray) -> np.ndarray:
    return (np.asarray(logits, dtype=float) > 0.0).astype(float)


def task_loss_ce(d: DirichletPosterior, y, logits=None) -> LossResult:
    """Bayes risk of cross-entropy: sum_c y_c [psi(S) - psi(alpha_c)].

    If `logits` is omitted the gradient is gated by alpha_c > 1 (the region
    where evidence is active), which matches logits recovered as alpha - 1.
    """
    a = d.alpha
    y = _as_one_hot(y, d.n_classes)
    s = d.strength
    value = float(np.sum(y * (digamma(s) - digamma(a))))
    grad_alpha = trigamma(s) - y * trigamma(a)
    gate = _relu_gate(logits if logits is not None else a - 1.0)
    return LossResult(value=value, grad_logits=grad_alpha * gate)


def _dice_terms(alphas: np.ndarray, labels: np.ndarray):
    s = alphas.sum(axis=1, keepdims=True)  # (M, 1)
    rho = alphas / s  # (M, C)
    num = np.sum(labels * rho, axis=0)  # (C,)
    den = np.sum(labels**2 + rho**2 + rho * (1.0 - rho) / (s + 1.0), axis=0)
    return s, rho, num, den


def task_loss_dice(batch: SegBatch) -> LossResult:
    """Bayes risk of the soft-Dice loss over an M-pixel sample."""
    alphas = batch.alphas
    labels = batch.labels
    m, c = alphas.shape
    _, _, num, den = _dice_terms(alphas, labels)
    value = float(1.0 - (2.0 / c) * np.sum(num / den))
    grad = _dice_grad(alphas, labels)
    return LossResult(value=value, grad_logits=grad * _relu_gate(batch.logits))


def _dice_grad(alphas: np.ndarray, labels: np.ndarray) -> np.ndarray:
    m, c = alphas.shape
    s, rho, num, den = _dice_terms(alphas, labels)
    grad = np.zeros_like(alphas)
    for mi in range(m):
        s_m = s[mi, 0]
        rho_m = rho[mi]
        for j in range(c):
            drho = (np.eye(c)[j] - rho_m) / s_m  # d rho_{mi,:} / d alpha_{mi,j}
            dnum = labels[mi] * drho
            dden = (
                (2.0 * rho_m + (1.0 - 2.0 * rho_m) / (s_m + 1.0)) * drho
                - rho_m * (1.0 - rho_m) / (s_m + 1.0) ** 2
            )
            grad[mi, j] = -(2.0 / c) * np.sum((dnum * den - num * dden) / den**2)
    return grad


def _kl_to_uniform(alpha_tilde: np.ndarray) -> tuple[float, np.ndarray]:
    """KL[Dir(alpha_tilde) || Dir(1)] and its gradient w.r.t. alpha_tilde."""
    s = alpha_tilde.sum()
    c = alpha_tilde.size
    value = float(
        ln_gamma(s)
        - ln_gamma(float(c))
        - np.sum(ln_gamma(alpha_tilde))
        + np.sum((alpha_tilde - 1.0) * (digamma(alpha_tilde) - digamma(s)))
    )
    grad = (alpha_tilde - 1.0) * trigamma(alpha_tilde) - (s - c) * trigamma(s)
    return value, grad


def reg_loss(
    d: DirichletPosterior, logits, y, evidence_reduction: str = "sum"
) -> LossResult:
    """Evidence regularizer: KL of the label-masked posterior to the uniform
    Dirichlet, minus a (C/S)-weighted logit term that rewards evidence.

    `evidence_reduction` controls how the logit vector collapses to a scalar
    in the second term: "sum" (default) or "mean".
    """
    z = np.asarray(logits, dtype=float)
    a = d.alpha
    if z.shape != a.shape:
        raise ValueError("logits shape must match alpha")
    y = _as_one_hot(y, d.n_classes)
    if evidence_reduction not in ("sum", "mean"):
        raise ValueError(f"unknown evidence_reduction {evidence_reduction!r}")

    c = d.n_classes
    s = d.strength
    alpha_tilde = y + (1.0 - y) * a
    kl, kl_grad_tilde = _kl_to_uniform(alpha_tilde)

    f = float(z.sum()) if evidence_reduction == "sum" else float(z.mean())
    value = kl - (c / s) * f

    gate = _relu_gate(z)
    # KL path: alpha_tilde depends on alpha only where y == 0.
    grad = kl_grad_tilde * (1.0 - y) * gate
    # evidence term: -C/S * f has a direct d f / d z_j and an indirect d S / d z_j
    per_logit = 1.0 if evidence_reduction == "sum" else 1.0 / c
    grad += -(c / s) * per_logit
    grad += (c / s**2) * f * gate
    return LossResult(value=value, grad_logits=grad)


def reg_loss_seg(batch: SegBatch, evidence_reduction: str = "sum") -> LossResult:
    """Pixel-averaged evidence regularizer for segmentation samples."""
    m = batch.logits.shape[0]
    grads = np.zeros_like(batch.logits)
    value = 0.0
    for mi in range(m):
        r = reg_loss(
            DirichletPosterior(batch.alphas[mi]),
            batch.logits[mi],
            batch.labels[mi],
            evidence_reduction=evidence_reduction,
        )
        value += r.value
        grads[mi] = r.grad_logits
    return LossResult(value=value / m, grad_logits=grads / m)


def total_loss(
    d: DirichletPosterior | SegBatch,
    logits,
    y,
    lam: float,
    task_kind: str = "ce",
    evidence_reduction: str = "sum",
) -> LossResult:
    """Combined objective: task loss + lam * evidence regularizer.

    For `task_kind="dice"` pass a SegBatch as `d`; `logits` and `y` are then
    ignored and taken from the batch.
    """
    if lam < 0.0:
        raise ValueError("lambda must be >= 0")
    if task_kind == "ce":
        if not isinstance(d, DirichletPosterior):
            raise ValueError("task_kind 'ce' requires a DirichletPosterior")
        task = task_loss_ce(d, y, logits=logits)
        reg = reg_loss(d, logits, y, evidence_reduction=evidence_reduction)
    elif task_kind == "dice":
        batch = d if isinstance(d, SegBatch) else SegBatch(np.asarray(logits), np.asarray(y))
        task = task_loss_dice(batch)
        reg = reg_loss_seg(batch, evidence_reduction=evidence_reduction)
    else:
        raise ValueError(f"unknown task_kind {task_kind!r}")
    return LossResult(
        value=task.value + lam * reg.value,
        grad_logits=task.grad_logits + lam * reg.grad_logits,
    )
