"""Soft-budget PI controller that turns a Full-evaluation ceiling into a risk threshold."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from softcap.errors import ConfigurationError, DegenerateProfileError, ProfileNotFoundError
from softcap.logger import logger
from softcap.trajectory import FeatureTensor

if TYPE_CHECKING:
    from softcap.policy import PolicyConfig


class ReferenceProfile(BaseModel):
    """
    Frozen lookup table C(p) of the cumulative Full fraction over normalized progress.

    Knots are (p, C) pairs, nondecreasing in both coordinates, pinned to (0, 0) and (1, 1).
    Values between knots are linearly interpolated.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    tau_ref: float | None = Field(
        default=None,
        description="Threshold of the fixed-threshold reference policy the table was built from.",
    )
    knots: tuple[tuple[float, float], ...]

    @model_validator(mode="after")
    def _check_knots(self) -> "ReferenceProfile":
        if len(self.knots) < 2:
            raise ValueError("A reference profile needs at least two knots.")
        if self.knots[0] != (0.0, 0.0) or self.knots[-1] != (1.0, 1.0):
            raise ValueError(
                f"Profile must start at (0, 0) and end at (1, 1), got {self.knots[0]} and {self.knots[-1]}."
            )
        for (p0, c0), (p1, c1) in zip(self.knots, self.knots[1:]):
            if p1 < p0 or c1 < c0:
                raise ValueError(f"Profile knots must be nondecreasing: ({p0}, {c0}) -> ({p1}, {c1}).")
        return self

    @classmethod
    def identity(cls) -> "ReferenceProfile":
        """C(p) = p."""
        return cls(knots=((0.0, 0.0), (1.0, 1.0)))

    def evaluate(self, progress: float) -> float:
        """C(progress), with progress clipped into [0, 1]."""
        points = np.array([knot[0] for knot in self.knots])
        fractions = np.array([knot[1] for knot in self.knots])
        return float(np.interp(min(max(progress, 0.0), 1.0), points, fractions))


class ControllerConfig(BaseModel):
    """Ceiling, reference profile, PI gains and clamps."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    cap: int = Field(
        default=24,
        ge=1,
        description="Soft ceiling N_cap on Full evaluations.",
    )
    profile: ReferenceProfile = Field(default_factory=ReferenceProfile.identity)
    base_threshold: float = Field(default=0.35, gt=0.0, lt=1.0)
    kp: float = Field(default=0.05, ge=0.0)
    ki: float = Field(default=0.01, ge=0.0)
    threshold_min: float = Field(default=0.05, ge=0.0, le=1.0)
    threshold_max: float = Field(default=0.95, ge=0.0, le=1.0)
    integral_min: float = Field(default=-20.0, le=0.0)
    integral_max: float = Field(default=20.0, ge=0.0)

    @model_validator(mode="after")
    def _check_clamps(self) -> "ControllerConfig":
        if not self.threshold_min < self.threshold_max:
            raise ValueError(
                f"threshold_min ({self.threshold_min}) must be below threshold_max ({self.threshold_max})."
            )
        if not self.threshold_min <= self.base_threshold <= self.threshold_max:
            raise ValueError(
                f"base_threshold ({self.base_threshold}) must lie within "
                f"[{self.threshold_min}, {self.threshold_max}]."
            )
        return self


@dataclass(frozen=True)
class ControllerState:
    integral: float
    threshold: float
    error: float

    @classmethod
    def initial(cls, cfg: ControllerConfig) -> "ControllerState":
        return cls(integral=0.0, threshold=cfg.base_threshold, error=0.0)


def normalized_progress(step: int, total_steps: int) -> float:
    """Normalized progress t / (T - 1); 1 for single-step runs."""
    if total_steps <= 1:
        return 1.0
    return step / (total_steps - 1)


def reference_count(cfg: ControllerConfig, progress: float) -> float:
    """Reference cumulative Full count C(p) * N_cap, kept real-valued."""
    return cfg.profile.evaluate(progress) * cfg.cap


def update(
    state: ControllerState,
    n_actual: int,
    progress: float,
    cfg: ControllerConfig,
) -> ControllerState:
    """
    One PI step on the budget-tracking error.

    A positive error (realized Fulls ahead of the reference) raises the threshold,
    so Full evaluations become less likely.

    Args:
        state (ControllerState): State after the previous step.
        n_actual (int): Full evaluations executed before the current decision.
        progress (float): Normalized progress in [0, 1].
        cfg (ControllerConfig): Gains, clamps and reference profile.

    Returns:
        ControllerState: The new (integral, threshold, error).
    """
    error = n_actual - reference_count(cfg, progress)
    integral = min(max(state.integral + error, cfg.integral_min), cfg.integral_max)
    threshold = min(
        max(cfg.base_threshold + cfg.kp * error + cfg.ki * integral, cfg.threshold_min),
        cfg.threshold_max,
    )
    return ControllerState(integral=integral, threshold=threshold, error=error)


def build_profile(
    tau_ref: float,
    trajectories: Sequence[Sequence[FeatureTensor]],
    policy_cfg: "PolicyConfig",
) -> ReferenceProfile:
    """
    Tabulate the cumulative Full fraction of a fixed-threshold reference policy.

    Each trajectory is run with the constant threshold `tau_ref` (warmup and guard Fulls
    included). Knot k sits at p = k / T and holds the ensemble-mean number of Fulls over the
    first k steps divided by the ensemble-mean total.

    Args:
        tau_ref (float): Reference threshold in (0, 1).
        trajectories: The ensemble; every member must have `policy_cfg.total_steps` steps.
        policy_cfg (PolicyConfig): Cache, observer and warmup settings of the reference policy.

    Returns:
        ReferenceProfile: A dense, frozen profile.

    Raises:
        ValueError: If the ensemble is empty or `tau_ref` is outside (0, 1).
        DegenerateProfileError: If the ensemble executed no Full evaluations at all.
    """
    # Imported here, the policy loop depends on this module.
    from softcap.cost_model import CostModel
    from softcap.policy import Action, run

    if not trajectories:
        raise ValueError("The reference ensemble is empty.")
    if not 0.0 < tau_ref < 1.0:
        raise ValueError(f"tau_ref must lie in (0, 1), got {tau_ref}.")

    reference_cfg = policy_cfg.model_copy(update={"fixed_threshold": tau_ref})
    cost_model = CostModel()
    total_steps = policy_cfg.total_steps

    cumulative = np.zeros((len(trajectories), total_steps + 1))
    for member, trajectory in enumerate(trajectories):
        trace = run(trajectory, reference_cfg, cost_model)
        fulls = [record.action == Action.FULL for record in trace.records]
        cumulative[member, 1:] = np.cumsum(fulls)

    mean_cumulative = cumulative.mean(axis=0)
    mean_total = mean_cumulative[-1]
    if mean_total <= 0:
        raise DegenerateProfileError(
            f"The reference policy (tau_ref={tau_ref}) executed no Full evaluations."
        )

    knots = [(k / total_steps, float(mean_cumulative[k] / mean_total)) for k in range(total_steps + 1)]
    knots[0] = (0.0, 0.0)
    knots[-1] = (1.0, 1.0)

    logger.info(
        f"Built reference profile from {len(trajectories)} trajectories "
        f"(tau_ref={tau_ref}, mean Fulls {mean_total:.2f})"
    )
    return ReferenceProfile(tau_ref=tau_ref, knots=tuple(knots))


def save_profile(profile: ReferenceProfile, path: Path) -> None:
    """Write a profile as `{"tau_ref": ..., "knots": [[p, C], ...]}`."""
    Path(path).write_text(
        json.dumps(profile.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8"
    )


def load_profile(path: Path) -> ReferenceProfile:
    """
    Read a profile file.

    Raises:
        ProfileNotFoundError: If the file does not exist.
        ConfigurationError: If the file is not a valid profile.
    """
    path = Path(path)
    if not path.is_file():
        raise ProfileNotFoundError(path)

    try:
        return ReferenceProfile.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid reference profile {path}: {e}") from e
