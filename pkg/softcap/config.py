import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from softcap.cache_engine import CacheConfig
from softcap.controller import ControllerConfig, load_profile
from softcap.cost_model import COST_PRESETS, CostModel
from softcap.errors import ConfigurationError
from softcap.observer import ObserverConfig
from softcap.policy import PolicyConfig
from softcap.trajectory import TrajectorySpec


class Settings(BaseSettings):
    """
    Process-level settings for the softcap simulator.

    Settings can be provided via a .env file or environment variables; the CLI adds
    command-line flags on top of the same fields.
    """

    model_config = SettingsConfigDict(
        env_prefix="SOFTCAP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO",
        description="The logging level for the application.",
    )
    seed: int | None = Field(
        default=None,
        ge=0,
        lt=2**64,
        description=(
            "Overrides the trajectory seed of a run, or replaces the seed list of a sweep, "
            "ablation or profile build."
        ),
    )
    jobs: int = Field(
        default=1,
        ge=1,
        le=64,
        description="Maximum number of sweep or ablation rows executed concurrently.",
    )
    out: Path | None = Field(
        default=None,
        description="Output directory. Defaults to the spec's output_dir, then 'softcap-out'.",
    )


DEFAULT_OUTPUT_DIR = Path("softcap-out")


class PolicySection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    warmup_steps: int = Field(default=10, ge=0)
    fixed_threshold: float | None = Field(default=None, ge=0.0, le=1.0)
    reset_increment_on_refresh: bool = False


class CostSection(BaseModel):
    """A cost preset, optionally with individual constants overridden."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: Literal["flux-dev-50", "unit"] | None = "flux-dev-50"
    c_full: float | None = None
    c_cache: float | None = None
    c_obs: float | None = None
    c_ctrl: float | None = None

    @model_validator(mode="after")
    def _check_model(self) -> "CostSection":
        self.cost_model()
        return self

    def cost_model(self) -> CostModel:
        values = COST_PRESETS[self.preset].model_dump() if self.preset else {}
        overrides = {
            name: value
            for name in ("c_full", "c_cache", "c_obs", "c_ctrl")
            if (value := getattr(self, name)) is not None
        }
        return CostModel(**{**values, **overrides})


class RunConfig(BaseModel):
    """The JSON document describing a single run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    trajectory: TrajectorySpec = Field(default_factory=TrajectorySpec)
    cache: CacheConfig = Field(default_factory=CacheConfig)
    observer: ObserverConfig = Field(default_factory=ObserverConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    policy: PolicySection = Field(default_factory=PolicySection)
    cost: CostSection = Field(default_factory=CostSection)
    profile_path: Path | None = Field(
        default=None,
        description="Reference profile file; replaces controller.profile when set.",
    )

    @model_validator(mode="after")
    def _check_warmup(self) -> "RunConfig":
        if self.policy.warmup_steps >= self.trajectory.steps:
            raise ValueError(
                f"policy.warmup_steps ({self.policy.warmup_steps}) must be smaller than "
                f"trajectory.steps ({self.trajectory.steps})."
            )
        return self

    def resolve_paths(self, base_dir: Path) -> "RunConfig":
        """Make relative profile and replay paths absolute against `base_dir`."""
        update = {}
        if self.profile_path is not None and not self.profile_path.is_absolute():
            update["profile_path"] = (base_dir / self.profile_path).resolve()
        replay_path = self.trajectory.replay_path
        if replay_path is not None and not replay_path.is_absolute():
            update["trajectory"] = self.trajectory.model_copy(
                update={"replay_path": (base_dir / replay_path).resolve()}
            )
        return self.model_copy(update=update)

    def with_seed(self, seed: int) -> "RunConfig":
        return self.model_copy(
            update={"trajectory": self.trajectory.model_copy(update={"seed": seed})}
        )

    def with_cap(self, cap: int) -> "RunConfig":
        return self.model_copy(
            update={"controller": self.controller.model_copy(update={"cap": cap})}
        )

    def cost_model(self) -> CostModel:
        return self.cost.cost_model()

    def policy_config(self, resolve_profile: bool = True) -> PolicyConfig:
        """
        Build the policy-loop configuration.

        Args:
            resolve_profile (bool): Load `profile_path` into the controller config.

        Raises:
            ProfileNotFoundError: If `profile_path` points to a missing file.
            ConfigurationError: If the profile file is invalid.
        """
        controller = self.controller
        if resolve_profile and self.profile_path is not None:
            controller = controller.model_copy(update={"profile": load_profile(self.profile_path)})

        return PolicyConfig(
            warmup_steps=self.policy.warmup_steps,
            total_steps=self.trajectory.steps,
            cache=self.cache,
            observer=self.observer,
            controller=controller,
            fixed_threshold=self.policy.fixed_threshold,
            reset_increment_on_refresh=self.policy.reset_increment_on_refresh,
        )


def read_json_document[M: BaseModel](model: type[M], path: Path) -> M:
    """
    Parse a JSON file into a pydantic model.

    Raises:
        ConfigurationError: If the file is missing, is not JSON, or fails validation.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return model.model_validate(data)
    except FileNotFoundError as e:
        raise ConfigurationError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} is not valid JSON: {e}") from e
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {model.__name__} in {path}: {e}") from e


def load_run_config(path: Path) -> RunConfig:
    """Read a run config; relative paths inside it are resolved against its directory."""
    path = Path(path)
    return read_json_document(RunConfig, path).resolve_paths(path.parent)


def dump_run_config(cfg: RunConfig, path: Path) -> None:
    Path(path).write_text(cfg.model_dump_json(indent=2) + "\n", encoding="utf-8")
