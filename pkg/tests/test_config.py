"""Tests for settings and run-config documents."""

import shutil
from pathlib import Path

import pytest
from pydantic import ValidationError

from softcap.config import (
    CostSection,
    RunConfig,
    Settings,
    dump_run_config,
    load_run_config,
)
from softcap.controller import ReferenceProfile
from softcap.cost_model import COST_PRESETS
from softcap.errors import ConfigurationError, ProfileNotFoundError


class TestSettings:
    """Tests for environment-driven settings."""

    def test_defaults(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path):
        """Without environment variables the documented defaults apply."""
        monkeypatch.chdir(tmp_path)
        for name in ("SOFTCAP_LOG_LEVEL", "SOFTCAP_SEED", "SOFTCAP_JOBS", "SOFTCAP_OUT"):
            monkeypatch.delenv(name, raising=False)

        settings = Settings()

        assert settings.log_level == "INFO"
        assert settings.seed is None
        assert settings.jobs == 1
        assert settings.out is None

    def test_environment_overrides(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path):
        """SOFTCAP_* variables populate the fields."""
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("SOFTCAP_LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("SOFTCAP_SEED", "42")
        monkeypatch.setenv("SOFTCAP_JOBS", "4")
        monkeypatch.setenv("SOFTCAP_OUT", str(tmp_path / "out"))

        settings = Settings()

        assert settings.log_level == "DEBUG"
        assert settings.seed == 42
        assert settings.jobs == 4
        assert settings.out == tmp_path / "out"

    def test_dotenv_file(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path):
        """A .env file in the working directory is read."""
        monkeypatch.chdir(tmp_path)
        monkeypatch.delenv("SOFTCAP_JOBS", raising=False)
        (tmp_path / ".env").write_text("SOFTCAP_JOBS=3\n", encoding="utf-8")

        assert Settings().jobs == 3

    @pytest.mark.parametrize("name,value", [("SOFTCAP_JOBS", "0"), ("SOFTCAP_JOBS", "65"), ("SOFTCAP_SEED", "-1")])
    def test_invalid_values(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path, name: str, value: str):
        """Out-of-range values are rejected."""
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv(name, value)

        with pytest.raises(ValidationError):
            Settings()


class TestCostSection:
    """Tests for cost presets and overrides."""

    def test_preset(self):
        """A bare preset resolves to the preset model."""
        assert CostSection(preset="unit").cost_model() == COST_PRESETS["unit"]

    def test_override(self):
        """Individual constants override the preset."""
        model = CostSection(preset="flux-dev-50", c_obs=0.0, c_ctrl=0.0).cost_model()

        assert model.c_full == 74.39
        assert model.overhead == 0.0

    def test_invalid_combination(self):
        """Overrides that make Cache as expensive as Full are rejected at load time."""
        with pytest.raises(ValidationError):
            CostSection(preset="unit", c_cache=2.0)

    def test_unknown_preset(self):
        """Only the known presets are accepted."""
        with pytest.raises(ValidationError):
            CostSection(preset="sdxl")


class TestRunConfig:
    """Tests for loading and deriving run configs."""

    def test_load_sample(self, run_config_path: Path):
        """The sample config loads with its sections and derived policy config."""
        cfg = load_run_config(run_config_path)
        policy = cfg.policy_config()

        assert cfg.trajectory.seed == 7
        assert cfg.controller.cap == 24
        assert policy.total_steps == 50
        assert policy.warmup_steps == 10
        assert policy.controller.threshold_min == 0.25
        assert policy.controller.profile == ReferenceProfile.identity()
        assert cfg.cost_model() == COST_PRESETS["flux-dev-50"]

    def test_defaults_for_empty_document(self, write_json):
        """Every section has defaults."""
        cfg = load_run_config(write_json("empty.json", {}))

        assert cfg.trajectory.steps == 50
        assert cfg.policy.warmup_steps == 10

    def test_warmup_must_be_below_steps(self, write_json, run_config_document):
        """policy.warmup_steps >= trajectory.steps is a configuration error."""
        run_config_document["policy"]["warmup_steps"] = 50

        with pytest.raises(ConfigurationError, match="warmup_steps"):
            load_run_config(write_json("bad.json", run_config_document))

    def test_unknown_key(self, write_json, run_config_document):
        """Unknown keys are rejected."""
        run_config_document["cache"]["ordr"] = 3

        with pytest.raises(ConfigurationError, match="RunConfig"):
            load_run_config(write_json("bad.json", run_config_document))

    def test_missing_file(self, tmp_path: Path):
        """A missing config file is a configuration error."""
        with pytest.raises(ConfigurationError, match="not found"):
            load_run_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path: Path):
        """A file that is not JSON is a configuration error."""
        path = tmp_path / "broken.json"
        path.write_text("{ not json", encoding="utf-8")

        with pytest.raises(ConfigurationError, match="not valid JSON"):
            load_run_config(path)

    def test_relative_profile_path(self, tmp_path: Path, tests_data_path: Path, write_json, run_config_document):
        """profile_path is resolved against the config file and loaded into the controller."""
        shutil.copy(tests_data_path / "configs" / "profile_front_loaded.json", tmp_path / "profile.json")
        run_config_document["profile_path"] = "profile.json"

        cfg = load_run_config(write_json("run.json", run_config_document))

        assert cfg.profile_path == (tmp_path / "profile.json").resolve()
        assert cfg.policy_config().controller.profile.tau_ref == 0.35
        assert cfg.policy_config(resolve_profile=False).controller.profile == ReferenceProfile.identity()

    def test_missing_profile(self, write_json, run_config_document):
        """A profile_path to a missing file fails when the policy config is built."""
        run_config_document["profile_path"] = "nowhere.json"
        cfg = load_run_config(write_json("run.json", run_config_document))

        with pytest.raises(ProfileNotFoundError):
            cfg.policy_config()

    def test_relative_replay_path(self, write_json):
        """A relative replay path is resolved against the config file."""
        document = {"trajectory": {"kind": "replay", "steps": 3, "tokens": 1, "channels": 2, "replay_path": "ramp.txt"}}

        cfg = load_run_config(write_json("replay.json", document))

        assert cfg.trajectory.replay_path.is_absolute()
        assert cfg.trajectory.replay_path.name == "ramp.txt"

    def test_with_seed_and_cap(self, run_config_path: Path):
        """Derived configs leave the original untouched."""
        cfg = load_run_config(run_config_path)

        derived = cfg.with_seed(99).with_cap(8)

        assert (derived.trajectory.seed, derived.controller.cap) == (99, 8)
        assert (cfg.trajectory.seed, cfg.controller.cap) == (7, 24)

    def test_dump_and_reload(self, run_config_path: Path, tmp_path: Path):
        """A dumped config loads back equal."""
        cfg = load_run_config(run_config_path).with_cap(12)
        target = tmp_path / "dumped.json"

        dump_run_config(cfg, target)

        assert load_run_config(target) == cfg
        assert isinstance(RunConfig.model_validate_json(target.read_text()), RunConfig)
