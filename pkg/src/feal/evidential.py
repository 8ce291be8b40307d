"""Dirichlet evidential quantities.

Evidence is gated through ReLU, so concentrations satisfy alpha_c >= 1 and
the strength S >= C. Aleatoric uncertainty is the expected Shannon entropy
of the categorical prediction; epistemic uncertainty is the differential
entropy of the Dirichlet itself and may be negative. Density work happens in
log space and is exponentiated only at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import digamma, ln_gamma

__all__ = [
    "DirichletPosterior",
    "UncertaintyTriple",
    "alpha_from_logits",
    "posterior",
    "aleatoric_uncertainty",
    "epistemic_uncertainty",
    "calibrated_uncertainty",
    "dirichlet_density_grid",
]


@dataclass(frozen=True)
class DirichletPosterior:
    """Concentration vector of a Dirichlet over categorical predictions."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("alpha must be a vector of length >= 2")
        if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
            raise ValueError("alpha entries must be finite and > 0")
        object.__setattr__(self, "alpha", a)

    @property
    def n_classes(self) -> int:
        return self.alpha.size

    @property
    def evidence(self) -> np.ndarray:
        return self.alpha - 1.0

    @property
    def strength(self) -> float:
        return float(self.alpha.sum())


@dataclass(frozen=True)
class UncertaintyTriple:
    """Aleatoric (global + local) and epistemic components with their product."""

    ale_global: float
    ale_local: float
    epi_global: float
    calibrated: float = field(default=float("nan"))

    def __post_init__(self):
        object.__setattr__(
            self, "calibrated", (self.ale_global + self.ale_local) * self.epi_global
        )


def alpha_from_logits(logits) -> DirichletPosterior:
    """Map raw logits to concentrations via alpha = ReLU(logits) + 1."""
    z = np.asarray(logits, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("logits must be a vector of length >= 2")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    return DirichletPosterior(np.maximum(z, 0.0) + 1.0)


def posterior(d: DirichletPosterior) -> np.ndarray:
    """Expected categorical prediction alpha / S."""
    return d.alpha / d.strength


def aleatoric_uncertainty(d: DirichletPosterior) -> float:
    """Expected Shannon entropy of the categorical prediction."""
    s = d.strength
    probs = d.alpha / s
    return float(np.sum(probs * (digamma(s + 1.0) - digamma(d.alpha + 1.0))))


def epistemic_uncertainty(d: DirichletPosterior, printed_form: bool = False) -> float:
    """Differential entropy of the Dirichlet; may be negative.

    The default uses the standard closed form
    ln B(alpha) + (S - C) psi(S) - sum_c (alpha_c - 1) psi(alpha_c).
    `printed_form=True` switches to a variant that subtracts ln Gamma(S) once
    per class instead of once overall; kept only for A/B comparison.
    """
    a = d.alpha
    s = d.strength
    c = d.n_classes
    lngamma_s = float(ln_gamma(s))
    ln_b = float(np.sum(ln_gamma(a))) - lngamma_s
    if printed_form:
        ln_b -= (c - 1) * lngamma_s
    return float(ln_b + (s - c) * digamma(s) - np.sum((a - 1.0) * digamma(a)))


def calibrated_uncertainty(
    global_post: DirichletPosterior,
    local_post: DirichletPosterior,
    epi_shift: float = 0.0,
) -> UncertaintyTriple:
    """Calibrated score: (aleatoric_global + aleatoric_local) * epistemic_global.

    `epi_shift` adds an optional affine offset to the epistemic factor before
    the product; off (0.0) by default.
    """
    if global_post.n_classes != local_post.n_classes:
        raise ValueError(
            f"class-count mismatch: {global_post.n_classes} vs {local_post.n_classes}"
        )
    return UncertaintyTriple(
        ale_global=aleatoric_uncertainty(global_post),
        ale_local=aleatoric_uncertainty(local_post),
        epi_global=epistemic_uncertainty(global_post) + epi_shift,
    )


def log_density(d: DirichletPosterior, rho) -> float:
    """Dirichlet log-density at a simplex point."""
    rho = np.asarray(rho, dtype=float)
    a = d.alpha
    ln_b = float(np.sum(ln_gamma(a)) - ln_gamma(d.strength))
    return float(np.sum((a - 1.0) * np.log(rho)) - ln_b)


def dirichlet_density_grid(
    d: DirichletPosterior, resolution: int
) -> list[tuple[tuple[float, float, float], float]]:
    """Evaluate the density on an interior barycentric grid of the 2-simplex.

    Only C=3 is supported. Grid points are cell centers of the triangular
    subdivision at the given resolution, so a Riemann sum of
    density * (1 / resolution^2) (area in (b1, b2) coordinates) approximates 1.
    """
    if d.n_classes != 3:
        raise ValueError("density grid is only defined for C = 3")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    a = d.alpha
    ln_b = float(np.sum(ln_gamma(a)) - ln_gamma(d.strength))
    out = []
    h = 1.0 / resolution
    for i in range(resolution):
        for j in range(resolution - i):
            # centroids of the two triangles in cell (i, j); both lie strictly inside
            for cx, cy in ((i + 1 / 3, j + 1 / 3), (i + 2 / 3, j + 2 / 3)):
                if cx + cy >= resolution:
                    continue
                b1 = cx * h
                b2 = cy * h
                b3 = 1.0 - b1 - b2
                logpdf = (
                    (a[0] - 1.0) * np.log(b1)
                    + (a[1] - 1.0) * np.log(b2)
                    + (a[2] - 1.0) * np.log(b3)
                    - ln_b
                )
                out.append(((b1, b2, b3), float(np.exp(logpdf))))
    return out
