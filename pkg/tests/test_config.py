import pytest

from feal.config import CONFIG_VERSION, ExperimentConfig


class TestRoundTrip:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert ExperimentConfig.from_text(cfg.to_text()) == cfg

    def test_non_defaults(self):
        cfg = ExperimentConfig(
            n_clients=6, shift_strength=0.0, seeds=(5, 9), output_dir="runs/x"
        )
        back = ExperimentConfig.from_text(cfg.to_text())
        assert back == cfg
        assert back.seeds == (5, 9)

    def test_from_file(self, tmp_path):
        path = tmp_path / "c.txt"
        cfg = ExperimentConfig(budget=7)
        path.write_text(cfg.to_text())
        assert ExperimentConfig.from_file(path) == cfg

    def test_comments_and_blanks_ignored(self):
        text = ExperimentConfig().to_text() + "\n# trailing comment\n\n"
        assert ExperimentConfig.from_text(text) == ExperimentConfig()


class TestFailClosedParsing:
    def test_unknown_key(self):
        text = ExperimentConfig().to_text() + "optimizer = sgd\n"
        with pytest.raises(ValueError, match="unknown config key"):
            ExperimentConfig.from_text(text)

    def test_duplicate_key(self):
        text = ExperimentConfig().to_text() + "budget = 10\n"
        with pytest.raises(ValueError, match="duplicate config key"):
            ExperimentConfig.from_text(text)

    def test_missing_version(self):
        text = "\n".join(
            line
            for line in ExperimentConfig().to_text().splitlines()
            if not line.startswith("version")
        )
        with pytest.raises(ValueError, match="version"):
            ExperimentConfig.from_text(text)

    def test_wrong_version(self):
        text = ExperimentConfig().to_text().replace(
            f"version = {CONFIG_VERSION}", "version = 99"
        )
        with pytest.raises(ValueError, match="unsupported config version"):
            ExperimentConfig.from_text(text)

    def test_malformed_line(self):
        with pytest.raises(ValueError, match="expected 'key = value'"):
            ExperimentConfig.from_text("version = 1\nbudget\n")


class TestValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"fal_rounds": 0},
            {"comm_rounds": 0},
            {"budget": 0},
            {"n_clients": 1},
            {"n_classes": 1},
            {"dim": 1},
            {"lam": -0.1},
            {"tau": 0.0},
            {"tau": 1.5},
            {"min_neighbors": 0},
            {"lr": -1e-4},
            {"batch_size": 0},
            {"local_epochs": 0},
            {"seeds": ()},
        ],
    )
    def test_rejected_fields(self, kwargs):
        with pytest.raises(ValueError, match="invalid config field"):
            ExperimentConfig(**kwargs)


class TestHashAndOverrides:
    def test_hash_stable(self):
        assert ExperimentConfig().config_hash() == ExperimentConfig().config_hash()
        assert len(ExperimentConfig().config_hash()) == 16

    def test_hash_sensitive_to_fields(self):
        a = ExperimentConfig()
        assert a.config_hash() != a.with_overrides(budget=21).config_hash()

    def test_overrides_return_new_instance(self):
        a = ExperimentConfig()
        b = a.with_overrides(strategy="random")
        assert a.strategy == "feal" and b.strategy == "random"

    def test_overrides_validate(self):
        with pytest.raises(ValueError):
            ExperimentConfig().with_overrides(tau=0.0)
