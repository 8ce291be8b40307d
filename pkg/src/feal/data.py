"""Synthetic multi-domain data with controllable cross-client shift.

Each client mixes three components in a shared base space: broad Gaussians
around common class anchors, many tight per-class satellite clusters, and a
few dense confuser blobs whose labels are uniform noise. Features then pass
through a client-specific affine warp whose deviation from the identity
scales with `shift_strength`. The energy-score diagnostic turns a trained
model's logits into a per-client score distribution; domain shift shows up
as low cross-client KS p-values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .nn import ModelParams, forward
from .numerics import ks_two_sample

__all__ = [
    "DomainSpec",
    "Partition",
    "generate_multidomain",
    "energy_score",
    "domain_shift_report",
    "dump_partition_csv",
    "kde_curve",
]


# fraction of each client's samples drawn from its tight class satellites
SATELLITE_FRACTION = 0.9
SATELLITES_PER_CLASS = 40
SATELLITE_SIGMA = 0.25
SATELLITE_REACH = 4.0

# dense blobs whose labels are uniform noise: permanently ambiguous regions
CONFUSER_FRACTION = 0.3
CONFUSER_BLOBS = 3
CONFUSER_SIGMA = 0.25


@dataclass(frozen=True)
class DomainSpec:
    """Per-client affine warp and label marginal."""

    transform: np.ndarray  # (dim, dim), invertible
    offset: np.ndarray  # (dim,)
    label_weights: np.ndarray  # (C,), positive, sums to 1
    noise_scale: float
    n_samples: int

    def __post_init__(self):
        if abs(np.linalg.det(self.transform)) < 1e-12:
            raise ValueError("domain transform must be invertible")
        w = np.asarray(self.label_weights, dtype=float)
        if np.any(w <= 0):
            raise ValueError("label weights must be positive")
        object.__setattr__(self, "label_weights", w / w.sum())


@dataclass(frozen=True)
class Partition:
    """One client's dataset with a fixed 8:2 train/test split."""

    features: np.ndarray  # (N, dim)
    labels: np.ndarray  # (N,), int
    train_idx: np.ndarray
    test_idx: np.ndarray
    spec: DomainSpec
    confuser_mask: np.ndarray | None = None  # (N,) bool, marks label-noise samples

    @property
    def train_features(self) -> np.ndarray:
        return self.features[self.train_idx]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_idx]

    @property
    def test_features(self) -> np.ndarray:
        return self.features[self.test_idx]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[self.test_idx]


def _class_anchors(n_classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Shared class means, well separated relative to unit within-class noise."""
    anchors = rng.normal(0.0, 1.0, size=(n_classes, dim))
    anchors *= 3.0 / np.linalg.norm(anchors, axis=1, keepdims=True)
    return anchors


def _random_rotation(dim: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation by `angle` in a random 2-D subspace, identity elsewhere."""
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    rot = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    rot[0, 0] = c
    rot[0, 1] = -s
    rot[1, 0] = s
    rot[1, 1] = c
    return q @ rot @ q.T


def generate_multidomain(
    n_clients: int,
    n_classes: int,
    dim: int,
    shift_strength: float,
    seed: int,
    samples_per_client: int = 500,
) -> list[Partition]:
    """Generate K client partitions sharing class structure under domain shift."""
    if n_clients < 2 or n_classes < 2 or dim < 2:
        raise ValueError("need n_clients >= 2, n_classes >= 2, dim >= 2")
    if samples_per_client < 10:
        raise ValueError("samples_per_client too small for an 8:2 split")
    rng = np.random.default_rng(seed)
    anchors = _class_anchors(n_classes, dim, rng)
    shared_sat_dirs = rng.normal(size=(n_classes, SATELLITES_PER_CLASS, dim))
    shared_sat_dirs /= np.linalg.norm(shared_sat_dirs, axis=2, keepdims=True)
    shared_conf_centers = rng.normal(0.0, 2.0, size=(CONFUSER_BLOBS, dim))
    partitions = []
    for k in range(n_clients):
        if shift_strength == 0.0:
            transform = np.eye(dim)
            offset = np.zeros(dim)
            class_weights = np.full(n_classes, 1.0 / n_classes)
            sat_reach = SATELLITE_REACH
        else:
            angle = shift_strength * rng.uniform(0.5, 1.2) * (1 if k % 2 == 0 else -1)
            scale = 1.0 + shift_strength * rng.uniform(-0.35, 0.6, size=dim)
            transform = _random_rotation(dim, angle, rng) * scale[None, :]
            offset = shift_strength * rng.normal(0.0, 1.2, size=dim)
            class_weights = rng.dirichlet(np.full(n_classes, 2.5 / shift_strength))
            class_weights = np.maximum(class_weights, 0.05)
            class_weights /= class_weights.sum()
            sat_reach = SATELLITE_REACH * max(shift_strength, 0.25)
        # client-specific tight satellite clusters per class: dense pockets the
        # globally shared structure does not cover
        if shift_strength == 0.0:
            sat_dirs = shared_sat_dirs
        else:
            sat_dirs = rng.normal(size=(n_classes, SATELLITES_PER_CLASS, dim))
            sat_dirs /= np.linalg.norm(sat_dirs, axis=2, keepdims=True)
        sat_centers = anchors[:, None, :] + sat_reach * sat_dirs
        spec = DomainSpec(
            transform=transform,
            offset=offset,
            label_weights=class_weights,
            noise_scale=1.0,
            n_samples=samples_per_client,
        )
        labels = rng.choice(n_classes, size=samples_per_client, p=class_weights)
        base = anchors[labels] + rng.normal(0.0, spec.noise_scale, size=(samples_per_client, dim))
        in_satellite = rng.random(samples_per_client) < SATELLITE_FRACTION
        which_sat = rng.integers(0, SATELLITES_PER_CLASS, size=samples_per_client)
        sat_points = sat_centers[labels, which_sat] + rng.normal(
            0.0, SATELLITE_SIGMA, size=(samples_per_client, dim)
        )
        base = np.where(in_satellite[:, None], sat_points, base)
        # confuser blobs: dense pockets with uniformly random labels, so no
        # amount of annotation resolves them
        if shift_strength == 0.0:
            conf_centers = shared_conf_centers
        else:
            conf_centers = rng.normal(0.0, 2.0, size=(CONFUSER_BLOBS, dim))
        in_confuser = rng.random(samples_per_client) < CONFUSER_FRACTION
        which_blob = rng.integers(0, CONFUSER_BLOBS, size=samples_per_client)
        conf_points = conf_centers[which_blob] + rng.normal(
            0.0, CONFUSER_SIGMA, size=(samples_per_client, dim)
        )
        base = np.where(in_confuser[:, None], conf_points, base)
        labels = np.where(
            in_confuser, rng.integers(0, n_classes, size=samples_per_client), labels
        )
        features = base @ spec.transform.T + spec.offset
        perm = rng.permutation(samples_per_client)
        n_train = int(round(0.8 * samples_per_client))
        partitions.append(
            Partition(
                features=features,
                labels=labels,
                train_idx=np.sort(perm[:n_train]),
                test_idx=np.sort(perm[n_train:]),
                spec=spec,
                confuser_mask=in_confuser,
            )
        )
    return partitions


def energy_score(logits) -> float:
    """Energy score -log sum_c exp(logit_c), via log-sum-exp stabilization."""
    z = np.asarray(logits, dtype=float)
    m = np.max(z, axis=-1)
    out = -(m + np.log(np.sum(np.exp(z - m[..., None]), axis=-1)))
    return float(out) if out.ndim == 0 else out


def domain_shift_report(partitions: list[Partition], p: ModelParams) -> np.ndarray:
    """K x K matrix of KS p-values between per-client energy-score samples.

    Diagonal entries compare two disjoint halves of the same client, so a
    well-matched model yields high p-values there.
    """
    scores = []
    for part in partitions:
        if part.features.shape[0] < 10:
            raise ValueError("partition too small for the shift diagnostic")
        scores.append(energy_score(forward(p, part.features).logits))
    k = len(partitions)
    mat = np.ones((k, k))
    for i in range(k):
        half = scores[i].size // 2
        _, mat[i, i] = ks_two_sample(scores[i][:half], scores[i][half:])
        for j in range(i + 1, k):
            _, pval = ks_two_sample(scores[i], scores[j])
            mat[i, j] = mat[j, i] = pval
    return mat


def kde_curve(values, n_points: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE with Silverman bandwidth, evaluated on a uniform grid.

    Plot data only; hypothesis testing goes through ks_two_sample.
    """
    v = np.asarray(values, dtype=float)
    std = v.std(ddof=1)
    bw = 1.06 * std * v.size ** (-1 / 5) if std > 0 else 1.0
    grid = np.linspace(v.min() - 3 * bw, v.max() + 3 * bw, n_points)
    dens = np.exp(-0.5 * ((grid[:, None] - v[None, :]) / bw) ** 2).sum(axis=1)
    dens /= v.size * bw * np.sqrt(2 * np.pi)
    return grid, dens


def dump_partition_csv(part: Partition, path):
    """One CSV per client: split,label,f1..fD."""
    dim = part.features.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "label"] + [f"f{i + 1}" for i in range(dim)])
        train = set(part.train_idx.tolist())
        for i in range(part.features.shape[0]):
            split = "train" if i in train else "test"
            writer.writerow([split, int(part.labels[i])] + [repr(x) for x in part.features[i]])
