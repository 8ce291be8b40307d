import os

import pytest

from feal.config import ExperimentConfig
from feal.experiment import (
    COMPONENT_ROWS,
    TAU_SWEEP,
    emit_reports,
    run_ablation,
    run_experiment,
    run_seed,
)


def tiny_cfg(tmp_path, **overrides):
    base = dict(
        n_clients=2,
        n_classes=2,
        dim=4,
        shift_strength=1.0,
        fal_rounds=2,
        comm_rounds=2,
        budget=5,
        samples_per_client=60,
        hidden=8,
        seeds=(1, 2),
        output_dir=str(tmp_path / "run"),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRunSeed:
    def test_row_counts_and_labeled_progression(self, tmp_path):
        cfg = tiny_cfg(tmp_path, fal_rounds=3)
        res = run_seed(cfg, seed=1)
        assert len(res.metrics_rows) == 3
        assert [r["labeled_total"] for r in res.metrics_rows] == [10, 20, 30]
        assert len(res.round_logs) == 3 * cfg.comm_rounds
        assert len(res.audit_rows) == 3 * cfg.n_clients * cfg.budget

    def test_single_round_is_random_only(self, tmp_path):
        cfg = tiny_cfg(tmp_path, fal_rounds=1)
        res = run_seed(cfg, seed=1)
        assert len(res.metrics_rows) == 1
        assert all(r["strategy"] == "random_init" for r in res.audit_rows)

    def test_later_rounds_use_strategy(self, tmp_path):
        cfg = tiny_cfg(tmp_path, strategy="entropy_G")
        res = run_seed(cfg, seed=1)
        later = [r for r in res.audit_rows if r["fal_round"] > 1]
        assert later and all(r["strategy"] == "entropy_G" for r in later)

    def test_deterministic(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        a = run_seed(cfg, seed=3)
        b = run_seed(cfg, seed=3)
        assert a.metrics_rows == b.metrics_rows
        assert a.audit_rows == b.audit_rows

    def test_component_ablation_changes_selection(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        full = run_seed(cfg, seed=1, components=(True, True, True))
        epi_only = run_seed(cfg, seed=1, components=(True, False, False))
        full_scores = [r["score"] for r in full.audit_rows if r["fal_round"] > 1]
        epi_scores = [r["score"] for r in epi_only.audit_rows if r["fal_round"] > 1]
        assert full_scores != epi_scores


class TestRunExperiment:
    def test_output_files(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        out = run_experiment(cfg)
        for name in ("config.txt", "metrics.csv", "rounds.csv", "selection_audit.csv",
                     "model_seed1.txt", "model_seed2.txt"):
            assert os.path.exists(os.path.join(out, name)), name

    def test_rerun_byte_identical(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        out = run_experiment(cfg)
        names = ("metrics.csv", "rounds.csv", "selection_audit.csv")
        first = {n: open(os.path.join(out, n), "rb").read() for n in names}
        run_experiment(cfg)
        for n in names:
            assert open(os.path.join(out, n), "rb").read() == first[n], n

    def test_seed_override(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        out = run_experiment(cfg, seed_override=(9,))
        assert os.path.exists(os.path.join(out, "model_seed9.txt"))
        text = open(os.path.join(out, "metrics.csv")).read()
        rows = [l for l in text.splitlines() if not l.startswith("#")][1:]
        assert len(rows) == cfg.fal_rounds
        assert all(r.startswith("9,") for r in rows)

    def test_hash_header_present(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        out = run_experiment(cfg)
        first = open(os.path.join(out, "metrics.csv")).readline()
        assert first == f"# config_hash={cfg.config_hash()}\n"


class TestRunAblation:
    def test_unknown_axis(self, tmp_path):
        with pytest.raises(ValueError, match="unknown ablation axis"):
            run_ablation(tiny_cfg(tmp_path), "dropout")

    def test_component_axis_row_count(self, tmp_path):
        cfg = tiny_cfg(tmp_path, seeds=(1,))
        out = run_ablation(cfg, "uncertainty_components")
        rows = [l for l in open(os.path.join(out, "comparison.csv"))
                if not l.startswith("#")][1:]
        assert len(rows) == len(COMPONENT_ROWS) * 1 * cfg.fal_rounds
        variants = {r.split(",")[1] for r in rows}
        assert len(variants) == len(COMPONENT_ROWS)

    def test_tau_axis_row_count(self, tmp_path):
        cfg = tiny_cfg(tmp_path, seeds=(1,))
        out = run_ablation(cfg, "tau")
        rows = [l for l in open(os.path.join(out, "comparison.csv"))
                if not l.startswith("#")][1:]
        assert len(rows) == len(TAU_SWEEP) * 1 * cfg.fal_rounds

    def test_loss_axis_has_two_variants(self, tmp_path):
        cfg = tiny_cfg(tmp_path, seeds=(1,))
        out = run_ablation(cfg, "loss")
        rows = [l for l in open(os.path.join(out, "comparison.csv"))
                if not l.startswith("#")][1:]
        variants = {r.split(",")[1] for r in rows}
        assert variants == {"loss=evidential", "loss=task_only"}


class TestEmitReports:
    def test_produces_summary_and_shift(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        out = run_experiment(cfg)
        produced = emit_reports(out)
        names = {os.path.basename(p) for p in produced}
        assert "summary.csv" in names and "domain_shift.csv" in names
        rows = [l for l in open(os.path.join(out, "summary.csv"))
                if not l.startswith("#")][1:]
        assert len(rows) == cfg.fal_rounds

    def test_rewritten_config_rejected(self, tmp_path):
        # editing config.txt after the run must invalidate the CSV hashes
        cfg = tiny_cfg(tmp_path, n_classes=3)
        out = run_experiment(cfg)
        cfg1 = cfg.with_overrides(seeds=(1,))
        with open(os.path.join(out, "config.txt"), "w") as fh:
            fh.write(cfg1.to_text())
        with pytest.raises(ValueError, match="config hash"):
            emit_reports(out)

    def test_missing_metrics_rejected(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        out = cfg.output_dir
        os.makedirs(out)
        with open(os.path.join(out, "config.txt"), "w") as fh:
            fh.write(cfg.to_text())
        with pytest.raises(FileNotFoundError):
            emit_reports(out)

    def test_hash_mismatch_rejected(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        out = run_experiment(cfg)
        other = cfg.with_overrides(budget=cfg.budget + 1)
        with open(os.path.join(out, "config.txt"), "w") as fh:
            fh.write(other.to_text())
        with pytest.raises(ValueError, match="config hash"):
            emit_reports(out)

    def test_simplex_grid_emitted(self, tmp_path):
        cfg = tiny_cfg(tmp_path, n_classes=3, seeds=(1,))
        out = run_experiment(cfg)
        produced = emit_reports(out)
        names = {os.path.basename(p) for p in produced}
        assert "simplex_grid.csv" in names
