"""FastAPI service exposing the experiment pipeline.

All heavy lifting lives in the core package; handlers only translate between
the HTTP schema and ExperimentConfig / run functions. Work is synchronous and
CPU-bound, so handlers are plain functions and FastAPI runs them in its
worker threadpool.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ExperimentConfig
from ..data import domain_shift_report
from ..evidential import DirichletPosterior, dirichlet_density_grid
from ..experiment import (
    ABLATION_AXES,
    emit_reports,
    run_ablation,
    run_experiment,
    run_seed,
)
from .schemas import (
    AblateRequest,
    AblateResponse,
    HealthResponse,
    ReportRequest,
    ReportResponse,
    RunRequest,
    RunResponse,
    ShiftReportRequest,
    ShiftReportResponse,
    SimplexGridRequest,
    SimplexGridResponse,
)

__all__ = ["create_app", "app"]


def _parse_config(text: str, seed_override: list[int] | None) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.from_text(text)
        if seed_override:
            cfg = cfg.with_overrides(seeds=tuple(seed_override))
        return cfg
    except (ValueError, TypeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def _final_round_rows(run_dir: str, name: str) -> list[dict]:
    from ..experiment import _read_csv

    _, _, rows = _read_csv(f"{run_dir}/{name}")
    last = max(int(r["fal_round"]) for r in rows)
    return [r for r in rows if int(r["fal_round"]) == last]


def create_app() -> FastAPI:
    app = FastAPI(title="feal", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest):
        cfg = _parse_config(req.config_text, req.seed_override)
        run_dir = run_experiment(cfg)
        return RunResponse(
            run_dir=run_dir,
            config_hash=cfg.config_hash(),
            summary=_final_round_rows(run_dir, "metrics.csv"),
        )

    @app.post("/ablate", response_model=AblateResponse)
    def ablate(req: AblateRequest):
        if req.axis not in ABLATION_AXES:
            raise HTTPException(
                status_code=422,
                detail=f"unknown axis {req.axis!r}; expected one of {ABLATION_AXES}",
            )
        cfg = _parse_config(req.config_text, req.seed_override)
        run_dir = run_ablation(cfg, req.axis)
        return AblateResponse(
            run_dir=run_dir,
            config_hash=cfg.config_hash(),
            variants=_final_round_rows(run_dir, "comparison.csv"),
        )

    @app.post("/shift-report", response_model=ShiftReportResponse)
    def shift_report(req: ShiftReportRequest):
        cfg = _parse_config(req.config_text, req.seed_override)
        matrices = {}
        for seed in cfg.seeds:
            res = run_seed(cfg, seed)
            mat = domain_shift_report(res.partitions, res.final_global)
            matrices[seed] = mat.tolist()
        return ShiftReportResponse(matrices=matrices)

    @app.post("/simplex-grid", response_model=SimplexGridResponse)
    def simplex_grid(req: SimplexGridRequest):
        try:
            d = DirichletPosterior(np.asarray(req.alpha, dtype=float))
            cells = dirichlet_density_grid(d, req.resolution)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        total = sum(dens for _, dens in cells) / (2 * req.resolution**2)
        return SimplexGridResponse(
            riemann_sum=total,
            cells=[
                {"b1": b1, "b2": b2, "b3": b3, "density": dens}
                for (b1, b2, b3), dens in cells
            ],
        )

    @app.post("/report", response_model=ReportResponse)
    def report(req: ReportRequest):
        try:
            produced = emit_reports(req.run_dir)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return ReportResponse(produced=produced)

    return app


app = create_app()
