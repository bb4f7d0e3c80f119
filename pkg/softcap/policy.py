"""Risk-gated Full/Cache decision loop."""

from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Mapping, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from softcap.cache_engine import (
    AnchorState,
    CacheConfig,
    approximate,
    cache_distance,
    refresh,
)
from softcap.controller import (
    ControllerConfig,
    ControllerState,
    normalized_progress,
    reference_count,
    update,
)
from softcap.cost_model import CostModel, speedup, total_cost
from softcap.errors import ConfigurationError
from softcap.logger import logger
from softcap.observer import ObserverConfig, RiskReport, observe
from softcap.trajectory import FeatureTensor


class Action(StrEnum):
    FULL = "Full"
    CACHE = "Cache"


class Reason(StrEnum):
    WARMUP = "warmup"
    GUARD = "guard"
    CROSSING = "crossing"
    CACHE = "cache"


class PolicyConfig(BaseModel):
    """Everything one run of the decision loop needs besides the trajectory and cost model."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    warmup_steps: int = Field(default=10, ge=0)
    total_steps: int = Field(ge=1)
    cache: CacheConfig = Field(default_factory=CacheConfig)
    observer: ObserverConfig = Field(default_factory=ObserverConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    fixed_threshold: float | None = Field(
        default=None,
        ge=0.0,
        le=1.0,
        description="Constant threshold replacing the PI controller when set.",
    )
    reset_increment_on_refresh: bool = Field(
        default=False,
        description="Forget the previous base score whenever the anchor is refreshed.",
    )

    @model_validator(mode="after")
    def _check_warmup(self) -> "PolicyConfig":
        if self.warmup_steps >= self.total_steps:
            raise ValueError(
                f"warmup_steps ({self.warmup_steps}) must be smaller than total_steps ({self.total_steps})."
            )
        return self


@dataclass(frozen=True)
class StepRecord:
    step: int
    action: Action
    reason: Reason
    risk: RiskReport
    threshold: float
    error: float
    integral: float
    n_actual: int
    cache_distance: int
    cost: float
    approx_error: float
    crossed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "action": self.action.value,
            "reason": self.reason.value,
            **self.risk.to_dict(),
            "tau": self.threshold,
            "e": self.error,
            "integral": self.integral,
            "n_actual": self.n_actual,
            "d": self.cache_distance,
            "cost": self.cost,
            "approx_error": self.approx_error,
            "crossed": self.crossed,
        }


@dataclass(frozen=True)
class RunSummary:
    actual_full: int
    crossing_full: int
    warmup_full: int
    guard_full: int
    total_cost: float
    risk_crossings: int
    cache_steps: int
    mean_approx_error: float
    speedup: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "actual_full": self.actual_full,
            "crossing_full": self.crossing_full,
            "warmup_full": self.warmup_full,
            "guard_full": self.guard_full,
            "total_cost": self.total_cost,
            "speedup": self.speedup,
            "risk_crossings": self.risk_crossings,
            "cache_steps": self.cache_steps,
            "mean_approx_error": self.mean_approx_error,
        }


@dataclass
class RunTrace:
    """Per-step records of one run plus its configuration snapshot and summary."""

    config: dict[str, Any]
    cost_model: CostModel
    records: list[StepRecord]
    final_anchor: AnchorState
    summary: RunSummary = field(init=False)

    def __post_init__(self):
        self.summary = count_summary(self)


def decide(risk: float, threshold: float) -> Action:
    """Full when the risk reaches the threshold; ties go to Full."""
    return Action.FULL if risk >= threshold else Action.CACHE


def count_summary(trace: RunTrace) -> RunSummary:
    """
    Fold the step records of a trace into its summary counters.

    Args:
        trace (RunTrace): A complete trace.

    Returns:
        RunSummary: Counters, total cost and speedup recomputed from the records.
    """
    records = trace.records
    reasons = [record.reason for record in records]
    cache_errors = [record.approx_error for record in records if record.action == Action.CACHE]

    cost = float(np.sum([record.cost for record in records])) if records else 0.0

    return RunSummary(
        actual_full=sum(record.action == Action.FULL for record in records),
        crossing_full=reasons.count(Reason.CROSSING),
        warmup_full=reasons.count(Reason.WARMUP),
        guard_full=reasons.count(Reason.GUARD),
        total_cost=cost,
        risk_crossings=sum(record.crossed for record in records),
        cache_steps=len(cache_errors),
        mean_approx_error=float(np.mean(cache_errors)) if cache_errors else 0.0,
        speedup=speedup(trace.cost_model, cost, len(records)) if records else 1.0,
    )


def _check_trajectory(trajectory: Sequence[FeatureTensor], cfg: PolicyConfig) -> None:
    if len(trajectory) != cfg.total_steps:
        raise ConfigurationError(
            f"Trajectory has {len(trajectory)} steps but the policy expects {cfg.total_steps}."
        )
    shape = trajectory[0].shape
    for step, feature in enumerate(trajectory):
        if feature.shape != shape:
            raise ConfigurationError(
                f"Step {step} has shape {feature.shape}, expected {shape}."
            )


def run(
    trajectory: Sequence[FeatureTensor],
    cfg: PolicyConfig,
    cost_model: CostModel,
    extra_fulls: Mapping[int, int] | None = None,
) -> RunTrace:
    """
    Run the closed Full/Cache loop over a trajectory.

    Each step updates the threshold first, then takes the first matching path:
    warmup (t < W), guard (cache distance >= D_max), or the risk gate. A Full refreshes the
    anchor with the true feature and increments N_actual; a Cache step forecasts the feature
    with the cache engine and leaves N_actual unchanged.

    Args:
        trajectory (Sequence[FeatureTensor]): The true per-step features.
        cfg (PolicyConfig): Warmup, cache, observer and controller settings.
        cost_model (CostModel): Per-step cost accounting.
        extra_fulls (Mapping[int, int], optional): Phantom Full evaluations charged to
            N_actual before the decision at the given steps, without being executed.

    Returns:
        RunTrace: One record per step plus the summary.

    Raises:
        ConfigurationError: If the trajectory length or shapes do not fit the config.
    """
    _check_trajectory(trajectory, cfg)
    extra_fulls = extra_fulls or {}
    max_skip = cfg.cache.max_skip

    anchor = AnchorState.empty(cfg.cache.order)
    anchor_input: FeatureTensor | None = None
    controller_state = ControllerState.initial(cfg.controller)
    prev_base: float | None = None
    n_actual = 0
    records: list[StepRecord] = []

    for step, feature in enumerate(trajectory):
        n_actual += extra_fulls.get(step, 0)
        progress = normalized_progress(step, cfg.total_steps)

        if cfg.fixed_threshold is None:
            controller_state = update(controller_state, n_actual, progress, cfg.controller)
        else:
            controller_state = ControllerState(
                integral=0.0,
                threshold=cfg.fixed_threshold,
                error=n_actual - reference_count(cfg.controller, progress),
            )
        threshold = controller_state.threshold

        distance = cache_distance(anchor, step) if anchor.has_anchor else 0
        risk = observe(
            feature, anchor_input, anchor, distance, max_skip, prev_base, cfg.observer
        )
        prev_base = risk.base

        if step < cfg.warmup_steps:
            action, reason = Action.FULL, Reason.WARMUP
        elif anchor.has_anchor and distance >= max_skip:
            action, reason = Action.FULL, Reason.GUARD
        elif decide(risk.score, threshold) == Action.FULL:
            action, reason = Action.FULL, Reason.CROSSING
        else:
            action, reason = Action.CACHE, Reason.CACHE

        if action == Action.FULL:
            anchor = refresh(anchor, step, feature)
            anchor_input = feature
            n_actual += 1
            approx_error = 0.0
            if cfg.reset_increment_on_refresh:
                prev_base = None
            if reason != Reason.WARMUP:
                logger.debug(
                    f"Step {step}: Full ({reason}) s={risk.score:.4f} tau={threshold:.4f} d={distance}"
                )
        else:
            estimate = approximate(anchor, step, cfg.cache)
            approx_error = float(np.linalg.norm(estimate.data - feature.data))

        records.append(
            StepRecord(
                step=step,
                action=action,
                reason=reason,
                risk=risk,
                threshold=threshold,
                error=controller_state.error,
                integral=controller_state.integral,
                n_actual=n_actual,
                cache_distance=distance,
                cost=cost_model.step_cost(full=action == Action.FULL),
                approx_error=approx_error,
                crossed=risk.score >= threshold,
            )
        )

    return RunTrace(
        config=cfg.model_dump(mode="json"),
        cost_model=cost_model,
        records=records,
        final_anchor=anchor,
    )


def expected_total_cost(trace: RunTrace) -> float:
    """Closed-form cost of a trace from its Full count."""
    return total_cost(trace.cost_model, trace.summary.actual_full, len(trace.records))
