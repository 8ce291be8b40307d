"""Pydantic request/response models for the experiment service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    config_text: str
    seed_override: list[int] | None = None


class RunResponse(BaseModel):
    run_dir: str
    config_hash: str
    summary: list[dict]


class AblateRequest(BaseModel):
    config_text: str
    axis: str
    seed_override: list[int] | None = None


class AblateResponse(BaseModel):
    run_dir: str
    config_hash: str
    variants: list[dict]


class ShiftReportRequest(BaseModel):
    config_text: str
    seed_override: list[int] | None = None


class ShiftReportResponse(BaseModel):
    # one K x K p-value matrix per seed
    matrices: dict[int, list[list[float]]]


class SimplexGridRequest(BaseModel):
    alpha: list[float] = Field(min_length=3, max_length=3)
    resolution: int = 60


class SimplexGridResponse(BaseModel):
    riemann_sum: float
    cells: list[dict]


class ReportRequest(BaseModel):
    run_dir: str


class ReportResponse(BaseModel):
    produced: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str
