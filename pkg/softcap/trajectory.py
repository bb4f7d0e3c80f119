"""Synthetic hidden-state trajectories and recorded trace files."""

import json
import re
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from softcap.errors import ConfigurationError, TraceParseError


MAX_DEGREE = 8
TRACE_MAGIC = "SOFTCAP-TRACE"
TRACE_VERSION = "v1"

_HEADER_PATTERN = re.compile(
    r"^SOFTCAP-TRACE\s+v1\s+T=(\d+)\s+tokens=(\d+)\s+channels=(\d+)\s*$"
)


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """
    A hidden state of one monitored layer at one step, stored as a (tokens, channels) float64 array.

    The array is copied on construction and made read-only, so tensors behave as values.
    """

    data: np.ndarray

    def __post_init__(self):
        array = np.array(self.data, dtype=np.float64)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(
                f"FeatureTensor data must be a non-empty (tokens, channels) array. Got shape {array.shape}."
            )
        if not np.all(np.isfinite(array)):
            raise ValueError("FeatureTensor data must be finite (no NaN/Inf).")
        array.flags.writeable = False
        object.__setattr__(self, "data", array)

    @classmethod
    def from_flat(cls, values: Iterable[float], tokens: int, channels: int) -> "FeatureTensor":
        """Build a tensor from row-major flat values."""
        flat = np.asarray(list(values), dtype=np.float64)
        if flat.size != tokens * channels:
            raise ValueError(
                f"Expected {tokens * channels} values for {tokens}x{channels}, got {flat.size}."
            )
        return cls(flat.reshape(tokens, channels))

    @property
    def tokens(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.tokens, self.channels)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def flat(self) -> np.ndarray:
        return self.data.ravel()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureTensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None  # type: ignore[assignment]


class TrajectoryKind(StrEnum):
    POLYNOMIAL = "polynomial"
    SMOOTH_NOISE = "smooth-noise"
    REGIME_SWITCHING = "regime-switching"
    REPLAY = "replay"


class TrajectorySpec(BaseModel):
    """
    Description of a per-step hidden-state trajectory.

    Burst intervals are half-open, `(start, end, amplitude)` covering steps start..end-1.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: TrajectoryKind = Field(
        default=TrajectoryKind.SMOOTH_NOISE,
        description="Trajectory family.",
    )
    steps: int = Field(default=50, ge=1, description="Number of steps T.")
    tokens: int = Field(default=8, ge=1)
    channels: int = Field(default=16, ge=1)
    degree: int = Field(
        default=2,
        ge=0,
        le=MAX_DEGREE,
        description="Polynomial degree (polynomial kind).",
    )
    coefficients: tuple[float, ...] | None = Field(
        default=None,
        description="Explicit c0..c_degree shared by every element (polynomial kind). Drawn per element when omitted.",
    )
    noise_scale: float = Field(
        default=0.04,
        ge=0.0,
        description="Standard deviation of the per-step Gaussian increments.",
    )
    base_scale: float = Field(
        default=1.0,
        ge=0.0,
        description="Standard deviation of the seeded initial state (noise kinds).",
    )
    burst_schedule: tuple[tuple[int, int, float], ...] = Field(
        default=(),
        description="Bursts (start, end, amplitude) multiplying the increments (regime-switching kind).",
    )
    seed: int = Field(default=0, ge=0, lt=2**64)
    replay_path: Path | None = Field(
        default=None,
        description="Trace file to replay (replay kind).",
    )

    @model_validator(mode="after")
    def _check_consistency(self) -> "TrajectorySpec":
        if self.coefficients is not None and len(self.coefficients) != self.degree + 1:
            raise ValueError(
                f"'coefficients' must have degree+1={self.degree + 1} entries, got {len(self.coefficients)}."
            )

        previous_end = None
        for start, end, amplitude in sorted(self.burst_schedule):
            if not (0 <= start < end <= self.steps):
                raise ValueError(
                    f"Burst ({start}, {end}) must satisfy 0 <= start < end <= steps={self.steps}."
                )
            if amplitude < 0:
                raise ValueError(f"Burst amplitude must be non-negative, got {amplitude}.")
            if previous_end is not None and start < previous_end:
                raise ValueError(f"Burst starting at {start} overlaps the previous burst.")
            previous_end = end

        if self.kind == TrajectoryKind.REPLAY and self.replay_path is None:
            raise ValueError("'replay_path' is required for the replay kind.")

        return self


def polynomial_coefficients(spec: TrajectorySpec) -> np.ndarray:
    """
    Coefficients of the polynomial kind, shaped (degree + 1, tokens, channels).

    Index k holds the coefficient of t**k.
    """
    shape = (spec.degree + 1, spec.tokens, spec.channels)
    if spec.coefficients is not None:
        return np.broadcast_to(
            np.asarray(spec.coefficients, dtype=np.float64)[:, None, None], shape
        ).copy()

    rng = np.random.default_rng(spec.seed)
    return rng.standard_normal(shape)


def _polynomial(spec: TrajectorySpec) -> np.ndarray:
    coefficients = polynomial_coefficients(spec)
    steps = np.arange(spec.steps, dtype=np.float64)[:, None, None]

    # Horner evaluation, highest power first
    values = np.zeros((spec.steps, spec.tokens, spec.channels))
    for coefficient in coefficients[::-1]:
        values = values * steps + coefficient
    return values


def _smooth_noise(spec: TrajectorySpec, with_bursts: bool) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    base = spec.base_scale * rng.standard_normal((spec.tokens, spec.channels))

    increments = spec.noise_scale * rng.standard_normal(
        (spec.steps, spec.tokens, spec.channels)
    )
    increments[0] = 0.0

    if with_bursts:
        for start, end, amplitude in spec.burst_schedule:
            increments[start:end] *= amplitude

    walk = base + np.cumsum(increments, axis=0)

    # Trailing 3-step moving average, front-padded with the first state
    padded = np.concatenate([walk[:1], walk[:1], walk], axis=0)
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def generate(spec: TrajectorySpec) -> list[FeatureTensor]:
    """
    Generate the trajectory described by `spec`.

    The result is a pure function of the spec (seed included).

    Args:
        spec (TrajectorySpec): The trajectory description.

    Returns:
        list[FeatureTensor]: T tensors of shape (tokens, channels).

    Raises:
        ConfigurationError: If a replayed trace does not match the spec's steps or shape.
    """
    if spec.kind == TrajectoryKind.REPLAY:
        tensors = load_trace(spec.replay_path)
        if len(tensors) != spec.steps:
            raise ConfigurationError(
                f"Replay trace has {len(tensors)} steps but the spec declares {spec.steps}."
            )
        if tensors[0].shape != (spec.tokens, spec.channels):
            raise ConfigurationError(
                f"Replay trace tensors are {tensors[0].shape}, spec declares {(spec.tokens, spec.channels)}."
            )
        return tensors

    if spec.kind == TrajectoryKind.POLYNOMIAL:
        values = _polynomial(spec)
    else:
        values = _smooth_noise(
            spec, with_bursts=spec.kind == TrajectoryKind.REGIME_SWITCHING
        )

    return [FeatureTensor(step_values) for step_values in values]


@dataclass(frozen=True)
class TraceMeta:
    """Header information of a recorded trace."""

    steps: int
    tokens: int
    channels: int
    layer: str | None = None


def save_trace(
    path: Path,
    tensors: Sequence[FeatureTensor],
    layer: str | None = None,
) -> None:
    """
    Write a trajectory to a trace file.

    Files ending in `.json` use the JSON form; anything else uses the line-oriented text form.
    Values are written with `repr`, so loading gives back the exact same floats.

    Args:
        path (Path): Destination file.
        tensors (Sequence[FeatureTensor]): Steps to write; all must share a shape.
        layer (str, optional): Free-form label of the monitored layer (JSON form only).
    """
    if not tensors:
        raise ValueError("Cannot save an empty trajectory.")

    tokens, channels = tensors[0].shape
    if any(tensor.shape != (tokens, channels) for tensor in tensors):
        raise ValueError("All tensors of a trace must share one shape.")

    path = Path(path)
    if path.suffix.lower() == ".json":
        meta: dict[str, Any] = {"T": len(tensors), "tokens": tokens, "channels": channels}
        if layer is not None:
            meta["layer"] = layer
        document = {
            "meta": meta,
            "steps": [tensor.flat.tolist() for tensor in tensors],
        }
        path.write_text(json.dumps(document), encoding="utf-8")
        return

    lines = [f"{TRACE_MAGIC} {TRACE_VERSION} T={len(tensors)} tokens={tokens} channels={channels}"]
    lines.extend(" ".join(repr(float(value)) for value in tensor.flat) for tensor in tensors)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_step(values: Sequence[Any], step: int, meta: TraceMeta) -> FeatureTensor:
    try:
        flat = [float(value) for value in values]
    except (TypeError, ValueError):
        raise TraceParseError("non-numeric value", step=step) from None

    expected = meta.tokens * meta.channels
    if len(flat) != expected:
        raise TraceParseError(f"expected {expected} values, found {len(flat)}", step=step)

    try:
        return FeatureTensor.from_flat(flat, meta.tokens, meta.channels)
    except ValueError as e:
        raise TraceParseError(str(e), step=step) from None


def _check_step_count(found: int, meta: TraceMeta) -> None:
    if found < meta.steps:
        raise TraceParseError(
            f"declared T={meta.steps} but found {found} tensors", step=found
        )
    if found > meta.steps:
        raise TraceParseError(
            f"declared T={meta.steps} but found {found} tensors", step=meta.steps
        )


def _header_int(raw_meta: dict, key: str) -> int:
    value = raw_meta[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise TraceParseError(f"{key} must be an integer, got {value!r}")
    return value


def _read_json_trace(text: str) -> tuple[TraceMeta, list[FeatureTensor]]:
    try:
        document = json.loads(text)
        raw_meta = document["meta"]
        meta = TraceMeta(
            steps=_header_int(raw_meta, "T"),
            tokens=_header_int(raw_meta, "tokens"),
            channels=_header_int(raw_meta, "channels"),
            layer=raw_meta.get("layer"),
        )
        raw_steps = document["steps"]
    except TraceParseError:
        raise
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise TraceParseError(f"invalid JSON trace header ({e})") from None

    if not isinstance(raw_steps, list):
        raise TraceParseError("steps must be a list of per-step value lists")
    if meta.steps < 1 or meta.tokens < 1 or meta.channels < 1:
        raise TraceParseError("T, tokens and channels must be positive")

    _check_step_count(len(raw_steps), meta)
    tensors = [_parse_step(values, step, meta) for step, values in enumerate(raw_steps)]
    return meta, tensors


def _read_text_trace(lines: list[str]) -> tuple[TraceMeta, list[FeatureTensor]]:
    match = _HEADER_PATTERN.match(lines[0].strip())
    if match is None:
        raise TraceParseError(f"invalid header line {lines[0].strip()!r}")

    meta = TraceMeta(
        steps=int(match.group(1)),
        tokens=int(match.group(2)),
        channels=int(match.group(3)),
    )
    if meta.steps < 1 or meta.tokens < 1 or meta.channels < 1:
        raise TraceParseError("T, tokens and channels must be positive")

    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()

    _check_step_count(len(body), meta)
    tensors = [_parse_step(line.split(), step, meta) for step, line in enumerate(body)]
    return meta, tensors


def read_trace(path: Path) -> tuple[TraceMeta, list[FeatureTensor]]:
    """
    Read a trace file in either the text or the JSON form.

    Args:
        path (Path): The trace file.

    Returns:
        tuple[TraceMeta, list[FeatureTensor]]: Header information and the steps.

    Raises:
        TraceParseError: If the header is missing or malformed, or a step is missing,
            has the wrong length, or holds non-numeric/non-finite values. Undecodable
            bytes are reported the same way.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise TraceParseError("not UTF-8 text") from None
    if not text.strip():
        raise TraceParseError("missing header")

    if text.lstrip().startswith("{"):
        return _read_json_trace(text)

    lines = text.lstrip("\n").splitlines()
    return _read_text_trace(lines)


def load_trace(path: Path) -> list[FeatureTensor]:
    """Load the steps of a trace file. See `read_trace`."""
    return read_trace(path)[1]
