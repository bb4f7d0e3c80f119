"""Trajectory drift observer: four low-cost cues fused into a risk score."""

import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from softcap.cache_engine import AnchorState
from softcap.errors import InputError
from softcap.trajectory import FeatureTensor


CUE_NAMES: tuple[str, str, str, str] = ("mag", "dir", "anc", "vol")

DEFAULT_NORM_CONSTANTS: tuple[float, float, float, float] = (0.5, 0.08, 0.5, 4.0)
DEFAULT_WEIGHTS: tuple[float, float, float, float] = (0.45, 0.25, 0.15, 0.15)

Cues = tuple[float, float, float, float]


class ObserverConfig(BaseModel):
    """
    Normalization constants, fusion weights and the positive-increment switch.

    Tuples are ordered (magnitude, direction, anchor deviation, temporal volatility).
    Weights must already sum to 1; they are never rescaled here.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    norm_constants: Cues = Field(default=DEFAULT_NORM_CONSTANTS)
    weights: Cues = Field(default=DEFAULT_WEIGHTS)
    epsilon: float = Field(default=1e-6, gt=0.0)
    increment_gain: float = Field(
        default=0.5,
        ge=0.0,
        description="Gain applied to positive jumps of the base score.",
    )
    increment_enabled: bool = Field(default=False)

    @field_validator("norm_constants")
    @classmethod
    def _check_norm_constants(cls, value: Cues) -> Cues:
        if any(constant <= 0 for constant in value):
            raise ValueError(f"Normalization constants must be positive, got {value}.")
        return value

    @field_validator("weights")
    @classmethod
    def _check_weights(cls, value: Cues) -> Cues:
        if any(weight < 0 for weight in value):
            raise ValueError(f"Weights must be non-negative, got {value}.")
        if not math.isclose(math.fsum(value), 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"Weights must sum to 1, got {value} (sum {math.fsum(value)}).")
        return value


@dataclass(frozen=True)
class RiskReport:
    raw: Cues
    normalized: Cues
    base: float
    increment: float
    score: float

    def to_dict(self) -> dict[str, float]:
        record: dict[str, float] = {}
        for name, value in zip(CUE_NAMES, self.raw):
            record[f"f_{name}"] = value
        for name, value in zip(CUE_NAMES, self.normalized):
            record[f"phi_{name}"] = value
        record["s_base"] = self.base
        record["ds"] = self.increment
        record["s"] = self.score
        return record


def _check_shapes(current: FeatureTensor, anchor_input: FeatureTensor) -> None:
    if current.shape != anchor_input.shape:
        raise InputError(
            f"Current input {current.shape} and anchor input {anchor_input.shape} differ in shape."
        )


def magnitude_drift(
    current: FeatureTensor, anchor_input: FeatureTensor, epsilon: float
) -> float:
    """Relative L1 change of the layer input since the anchor."""
    _check_shapes(current, anchor_input)
    change = np.abs(current.data - anchor_input.data).sum()
    return float(change / (np.abs(current.data).sum() + epsilon))


def directional_drift(
    current: FeatureTensor, anchor_input: FeatureTensor, epsilon: float
) -> float:
    """One minus the cosine similarity of the vectorized inputs; lies in [0, 2]."""
    _check_shapes(current, anchor_input)
    x, x_anchor = current.flat, anchor_input.flat
    denominator = np.linalg.norm(x) * np.linalg.norm(x_anchor) + epsilon
    return float(1.0 - np.dot(x, x_anchor) / denominator)


def anchor_deviation(distance: int, max_skip: int) -> float:
    """Cache distance normalized by the max skip, saturating at 1."""
    return min(distance / max_skip, 1.0)


def temporal_volatility(anchor: AnchorState) -> float:
    """RMS of the anchor's first-order difference; 0 until a second Full exists."""
    first_difference = anchor.first_difference
    if first_difference is None:
        return 0.0
    return float(np.sqrt(np.mean(np.square(first_difference.data))))


def score(cues: Cues, prev_base: float | None, cfg: ObserverConfig) -> RiskReport:
    """
    Normalize, clip and fuse raw cues into a risk report.

    Args:
        cues (Cues): Raw (f_mag, f_dir, f_anc, f_vol).
        prev_base (float, optional): Base score of the previous step, if any.
        cfg (ObserverConfig): Constants, weights and increment switch.

    Returns:
        RiskReport: Raw and normalized cues, base score, increment and final score.
    """
    normalized = tuple(
        min(max(value / constant, 0.0), 1.0)
        for value, constant in zip(cues, cfg.norm_constants)
    )
    base = math.fsum(weight * phi for weight, phi in zip(cfg.weights, normalized))
    base = min(max(base, 0.0), 1.0)

    increment = 0.0 if prev_base is None else max(0.0, base - prev_base)

    if cfg.increment_enabled:
        final = min(max(base + cfg.increment_gain * increment, 0.0), 1.0)
    else:
        final = base

    return RiskReport(
        raw=tuple(float(value) for value in cues),  # type: ignore[arg-type]
        normalized=normalized,  # type: ignore[arg-type]
        base=base,
        increment=increment,
        score=final,
    )


def saturated_report(cfg: ObserverConfig) -> RiskReport:
    """Report used while no anchor exists: every cue saturated, score 1."""
    return RiskReport(
        raw=cfg.norm_constants,
        normalized=(1.0, 1.0, 1.0, 1.0),
        base=1.0,
        increment=0.0,
        score=1.0,
    )


def observe(
    current: FeatureTensor,
    anchor_input: FeatureTensor | None,
    anchor: AnchorState,
    distance: int,
    max_skip: int,
    prev_base: float | None,
    cfg: ObserverConfig,
) -> RiskReport:
    """
    Compute all four cues for one step and fuse them.

    The volatility cue only changes when the anchor is refreshed.
    """
    if anchor_input is None or not anchor.has_anchor:
        return saturated_report(cfg)

    cues = (
        magnitude_drift(current, anchor_input, cfg.epsilon),
        directional_drift(current, anchor_input, cfg.epsilon),
        anchor_deviation(distance, max_skip),
        temporal_volatility(anchor),
    )
    return score(cues, prev_base, cfg)
