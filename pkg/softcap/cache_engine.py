"""Full-anchor state and finite-difference feature forecasting."""

import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from softcap.errors import GuardViolationError, OrderingError, StateError
from softcap.trajectory import FeatureTensor


class CoefficientScheme(StrEnum):
    NEWTON_FORWARD = "newton-forward"
    FACTORIAL_TAYLOR = "factorial-taylor"


class CacheConfig(BaseModel):
    """Configuration of the cache engine."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    order: int = Field(
        default=2,
        ge=1,
        description="Finite-difference order m.",
    )
    max_skip: int = Field(
        default=10,
        ge=1,
        description="Maximum cache distance D_max before a guard Full is required.",
    )
    coefficient_scheme: CoefficientScheme = Field(
        default=CoefficientScheme.NEWTON_FORWARD,
        description="How the difference terms are weighted when extrapolating.",
    )


@dataclass(frozen=True)
class AnchorState:
    """
    The latest Full anchor and its finite-difference stack.

    `history` holds the last order+1 Full features, oldest first; its last entry is the
    anchor feature. `diffs[r - 1]` is the r-th backward difference at the anchor, taken over
    Full evaluations in arrival order. Orders beyond the available history are absent.
    """

    order: int
    anchor_step: int | None = None
    history: tuple[FeatureTensor, ...] = ()
    diffs: tuple[FeatureTensor, ...] = ()

    @classmethod
    def empty(cls, order: int) -> "AnchorState":
        if order < 1:
            raise ValueError(f"Finite-difference order must be >= 1, got {order}.")
        return cls(order=order)

    @property
    def has_anchor(self) -> bool:
        return self.anchor_step is not None

    @property
    def anchor_feature(self) -> FeatureTensor | None:
        return self.history[-1] if self.history else None

    @property
    def first_difference(self) -> FeatureTensor | None:
        return self.diffs[0] if self.diffs else None

    def to_dict(self, include_diffs: bool = False) -> dict[str, Any]:
        """JSON-ready snapshot used for trace debugging."""
        snapshot: dict[str, Any] = {
            "anchor_step": self.anchor_step,
            "order": self.order,
            "history_depth": len(self.history),
            "available_orders": len(self.diffs),
        }
        if include_diffs:
            snapshot["anchor_feature"] = (
                self.anchor_feature.flat.tolist() if self.anchor_feature else None
            )
            snapshot["diffs"] = [diff.flat.tolist() for diff in self.diffs]
        return snapshot


def refresh(anchor: AnchorState, step: int, full_feature: FeatureTensor) -> AnchorState:
    """
    Record a Full evaluation and rebuild the difference stack.

    Args:
        anchor (AnchorState): The current anchor state.
        step (int): The step index of the Full evaluation.
        full_feature (FeatureTensor): The true feature computed at `step`.

    Returns:
        AnchorState: A new state anchored at `step`.

    Raises:
        StateError: If the feature shape differs from the stored history.
        OrderingError: If `step` is not after the current anchor step.
    """
    if anchor.history and full_feature.shape != anchor.history[-1].shape:
        raise StateError(
            f"Feature shape {full_feature.shape} does not match anchor shape {anchor.history[-1].shape}."
        )
    if anchor.anchor_step is not None and step <= anchor.anchor_step:
        raise OrderingError(step, anchor.anchor_step)

    history = (anchor.history + (full_feature,))[-(anchor.order + 1):]

    diffs = []
    level = np.stack([feature.data for feature in history])
    for _ in range(len(history) - 1):
        level = np.diff(level, axis=0)
        diffs.append(FeatureTensor(level[-1]))

    return AnchorState(
        order=anchor.order,
        anchor_step=step,
        history=history,
        diffs=tuple(diffs),
    )


def coefficient(scheme: CoefficientScheme, distance: int, r: int) -> float:
    """
    Weight of the r-th difference term at `distance` steps past the anchor.

    newton-forward: C(distance + r - 1, r), which continues the polynomial through the
    stored Full features exactly. factorial-taylor: distance**r / r!.
    """
    if scheme == CoefficientScheme.NEWTON_FORWARD:
        return float(math.comb(distance + r - 1, r))
    return distance**r / math.factorial(r)


def cache_distance(anchor: AnchorState, step: int) -> int:
    """
    Number of steps since the anchor.

    Raises:
        StateError: If no Full has been recorded yet.
        OrderingError: If `step` precedes the anchor.
    """
    if anchor.anchor_step is None:
        raise StateError("No anchor has been recorded yet.")
    if step < anchor.anchor_step:
        raise OrderingError(step, anchor.anchor_step)
    return step - anchor.anchor_step


def approximate(anchor: AnchorState, step: int, cfg: CacheConfig) -> FeatureTensor:
    """
    Forecast the feature at `step` from the anchor and its difference stack.

    Only the difference orders that are available (and at most `cfg.order`) are used,
    so a shallow history degrades gracefully down to returning the anchor feature.

    Args:
        anchor (AnchorState): The current anchor state.
        step (int): The step to approximate; must be after the anchor.
        cfg (CacheConfig): Order, max skip and coefficient scheme.

    Returns:
        FeatureTensor: The approximated feature, shaped like the anchor.

    Raises:
        StateError: If no Full has been recorded yet.
        OrderingError: If `step` is not after the anchor step.
        GuardViolationError: If the cache distance exceeds `cfg.max_skip`.
    """
    if anchor.anchor_step is None or anchor.anchor_feature is None:
        raise StateError("No anchor has been recorded yet.")

    distance = step - anchor.anchor_step
    if distance <= 0:
        raise OrderingError(step, anchor.anchor_step)
    if distance > cfg.max_skip:
        raise GuardViolationError(distance, cfg.max_skip)

    estimate = anchor.anchor_feature.data.copy()
    for r, diff in enumerate(anchor.diffs[: cfg.order], start=1):
        estimate += coefficient(cfg.coefficient_scheme, distance, r) * diff.data

    return FeatureTensor(estimate)
