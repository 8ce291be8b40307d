"""Experiment configuration: a versioned key-value text format.

Unknown keys are hard errors so a stale config can never silently fall back
to defaults. The canonical serialized text (fixed key order) is hashed and
embedded in every output file, which lets report emission detect mixed runs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

CONFIG_VERSION = 1

__all__ = ["ExperimentConfig", "CONFIG_VERSION"]


@dataclass(frozen=True)
class ExperimentConfig:
    n_clients: int = 4
    n_classes: int = 3
    dim: int = 16
    shift_strength: float = 1.0
    fal_rounds: int = 5
    comm_rounds: int = 30
    budget: int = 20
    strategy: str = "feal"
    lam: float = 1e-2
    tau: float = 0.85
    min_neighbors: int = 5
    lr: float = 5e-4
    weight_decay: float = 1e-5
    batch_size: int = 32
    local_epochs: int = 3
    samples_per_client: int = 500
    hidden: int = 64
    seeds: tuple[int, ...] = (1, 2, 3)
    output_dir: str = "runs/default"

    def __post_init__(self):
        checks = [
            ("fal_rounds", self.fal_rounds >= 1),
            ("comm_rounds", self.comm_rounds >= 1),
            ("budget", self.budget >= 1),
            ("n_clients", self.n_clients >= 2),
            ("n_classes", self.n_classes >= 2),
            ("dim", self.dim >= 2),
            ("lam", self.lam >= 0.0),
            ("tau", 0.0 < self.tau <= 1.0),
            ("min_neighbors", self.min_neighbors >= 1),
            ("lr", self.lr >= 0.0),
            ("batch_size", self.batch_size >= 1),
            ("local_epochs", self.local_epochs >= 1),
            ("seeds", len(self.seeds) >= 1),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"invalid config field: {name}")

    def to_text(self) -> str:
        lines = [f"version = {CONFIG_VERSION}"]
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "seeds":
                value = ",".join(str(s) for s in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)

    @staticmethod
    def from_text(text: str) -> "ExperimentConfig":
        known = {f.name: f for f in fields(ExperimentConfig)}
        kwargs = {}
        version_seen = False
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "version":
                if int(value) != CONFIG_VERSION:
                    raise ValueError(f"unsupported config version {value}")
                version_seen = True
                continue
            if key not in known:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            if key in kwargs:
                raise ValueError(f"line {lineno}: duplicate config key {key!r}")
            kwargs[key] = _parse_value(known[key].type, value)
        if not version_seen:
            raise ValueError("config file is missing the 'version' key")
        return ExperimentConfig(**kwargs)

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        with open(path) as fh:
            return ExperimentConfig.from_text(fh.read())


def _parse_value(type_name: str, value: str):
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    if type_name == "str":
        return value
    if type_name.startswith("tuple"):
        return tuple(int(tok) for tok in value.split(",") if tok.strip())
    raise ValueError(f"unsupported config field type {type_name}")
