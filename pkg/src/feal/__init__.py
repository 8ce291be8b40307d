"""Federated evidential active learning on synthetic multi-domain data."""

from .config import ExperimentConfig
from .evidential import (
    DirichletPosterior,
    UncertaintyTriple,
    alpha_from_logits,
    aleatoric_uncertainty,
    calibrated_uncertainty,
    epistemic_uncertainty,
    posterior,
)
from .numerics import PolygammaResult, dirichlet_sample, ks_two_sample, special_functions

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "DirichletPosterior",
    "UncertaintyTriple",
    "alpha_from_logits",
    "aleatoric_uncertainty",
    "calibrated_uncertainty",
    "epistemic_uncertainty",
    "posterior",
    "PolygammaResult",
    "dirichlet_sample",
    "ks_two_sample",
    "special_functions",
    "__version__",
]
