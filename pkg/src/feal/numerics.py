"""Special functions and statistical primitives used across the package.

Everything here is dependency-light on purpose: ln-gamma via Lanczos,
digamma/trigamma via recurrence + asymptotic series, Dirichlet sampling via
gamma variates, and a two-sample Kolmogorov-Smirnov test with the asymptotic
p-value. All functions accept scalars or numpy arrays where sensible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PolygammaResult",
    "special_functions",
    "ln_gamma",
    "digamma",
    "trigamma",
    "dirichlet_sample",
    "ks_two_sample",
]

# Lanczos coefficients for g=7, n=9 (double precision).
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)


@dataclass(frozen=True)
class PolygammaResult:
    """ln Gamma, digamma and trigamma evaluated at the same point."""

    ln_gamma: float
    digamma: float
    trigamma: float


def _check_positive(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("argument must be finite and > 0")
    return arr


def ln_gamma(x):
    """Natural log of the Gamma function for x > 0 (Lanczos, g=7)."""
    arr = _check_positive(x)
    z = arr - 1.0
    series = _LANCZOS_COEF[0] + np.sum(
        _LANCZOS_COEF[1:] / (z[..., None] + np.arange(1, 9)), axis=-1
    )
    t = z + _LANCZOS_G + 0.5
    out = 0.5 * math.log(2.0 * math.pi) + (z + 0.5) * np.log(t) - t + np.log(series)
    return out if out.ndim else float(out)


def digamma(x):
    """Digamma psi(x) for x > 0 via upward recurrence + asymptotic series."""
    arr = _check_positive(x)
    scalar = arr.ndim == 0
    z = np.atleast_1d(arr).astype(float).copy()
    acc = np.zeros_like(z)
    # shift into the asymptotic regime
    while np.any(z < 10.0):
        mask = z < 10.0
        acc[mask] -= 1.0 / z[mask]
        z[mask] += 1.0
    inv = 1.0 / z
    inv2 = inv * inv
    # psi(z) ~ ln z - 1/(2z) - sum B_2n / (2n z^{2n})
    out = (
        np.log(z)
        - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
    )
    out += acc
    return float(out[0]) if scalar else out


def trigamma(x):
    """Trigamma psi_1(x) for x > 0 via upward recurrence + asymptotic series."""
    arr = _check_positive(x)
    scalar = arr.ndim == 0
    z = np.atleast_1d(arr).astype(float).copy()
    acc = np.zeros_like(z)
    while np.any(z < 10.0):
        mask = z < 10.0
        acc[mask] += 1.0 / (z[mask] * z[mask])
        z[mask] += 1.0
    inv = 1.0 / z
    inv2 = inv * inv
    # psi_1(z) ~ 1/z + 1/(2z^2) + sum B_2n / z^{2n+1}
    out = inv * (
        1.0
        + 0.5 * inv
        + inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
    )
    out += acc
    return float(out[0]) if scalar else out


def special_functions(x: float) -> PolygammaResult:
    """Evaluate ln Gamma, digamma and trigamma at a single point x > 0."""
    if not (isinstance(x, (int, float)) and math.isfinite(x) and x > 0):
        raise ValueError(f"special_functions requires finite x > 0, got {x!r}")
    return PolygammaResult(
        ln_gamma=float(ln_gamma(x)),
        digamma=float(digamma(x)),
        trigamma=float(trigamma(x)),
    )


def dirichlet_sample(alpha, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from Dirichlet(alpha) via normalized gamma variates.

    Returns shape (C,) for size=None, else (size, C). The generator is
    advanced; callers own their generator.
    """
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise ValueError("alpha must be a vector of length >= 2")
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        raise ValueError("all concentration entries must be finite and > 0")
    shape = (a.size,) if size is None else (size, a.size)
    g = rng.gamma(shape=a, size=shape)
    return g / g.sum(axis=-1, keepdims=True)


def _kolmogorov_sf(t: float) -> float:
    """Survival function of the Kolmogorov distribution, P(K > t)."""
    if t <= 0.0:
        return 1.0
    if t < 1.18:
        # Jacobi-theta form, fast convergence for small t
        v = math.exp(-math.pi**2 / (8.0 * t * t))
        series = v + v**9 + v**25 + v**49
        return max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / t * series)
    total = 0.0
    for k in range(1, 101):
        term = (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * t * t)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov test.

    Returns (statistic, p_value) with the p-value from the asymptotic
    Kolmogorov distribution.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size < 5 or b.size < 5:
        raise ValueError("ks_two_sample requires at least 5 points per sample")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    p = _kolmogorov_sf(math.sqrt(n_eff) * stat)
    return stat, p
