"""Experiment drivers behind the CLI: single runs, cap sweeps, ablations and profile builds."""

import asyncio
import math
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_validator

from softcap.config import (
    DEFAULT_OUTPUT_DIR,
    RunConfig,
    dump_run_config,
    load_run_config,
    read_json_document,
)
from softcap.controller import ReferenceProfile, build_profile, save_profile
from softcap.errors import ConfigurationError, PartialSweepFailure
from softcap.formatter import (
    SUMMARY_COLUMNS,
    rows_to_csv,
    summary_to_json,
    trace_to_csv,
    trace_to_jsonl,
)
from softcap.logger import logger
from softcap.observer import CUE_NAMES, Cues, ObserverConfig
from softcap.policy import RunSummary, RunTrace, run
from softcap.trajectory import generate


class _BaseSpec(BaseModel):
    """Shared shape of multi-run specs: an inline base run config or a path to one."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base: RunConfig | None = None
    base_path: Path | None = None
    output_dir: Path | None = None
    seeds: list[int] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_base(self) -> "_BaseSpec":
        if (self.base is None) == (self.base_path is None):
            raise ValueError("Exactly one of 'base' and 'base_path' must be given.")
        return self

    @field_validator("seeds")
    @classmethod
    def _check_seeds(cls, value: list[int]) -> list[int]:
        if any(seed < 0 or seed >= 2**64 for seed in value):
            raise ValueError(f"Seeds must lie in [0, 2**64), got {value}.")
        if len(set(value)) != len(value):
            raise ValueError(f"Seeds must be distinct, got {value}.")
        return value

    def resolve_base(self, spec_path: Path) -> RunConfig:
        """The base run config, with relative paths resolved against the spec's directory."""
        spec_dir = Path(spec_path).parent
        if self.base_path is not None:
            return load_run_config(spec_dir / self.base_path)
        return self.base.resolve_paths(spec_dir)

    def effective_seeds(self, seed: int | None) -> list[int]:
        return [seed] if seed is not None else list(self.seeds)


class SweepSpec(_BaseSpec):
    caps: list[PositiveInt] = Field(min_length=1)

    @field_validator("caps")
    @classmethod
    def _check_caps(cls, value: list[int]) -> list[int]:
        if any(later <= earlier for earlier, later in zip(value, value[1:])):
            raise ValueError(f"Caps must be strictly increasing, got {value}.")
        return value


class AblationMode(StrEnum):
    CONTROLLER = "controller"
    CUE_LEAVE_ONE_OUT = "cue-leave-one-out"
    CUE_ISOLATED = "cue-isolated"
    WEIGHT_GRID = "weight-grid"
    INCREMENT_ON_OFF = "increment-on-off"


DEFAULT_THRESHOLD_GRID: tuple[float, ...] = tuple(round(0.05 * k, 2) for k in range(1, 20))


class AblationSpec(_BaseSpec):
    mode: AblationMode
    thresholds: list[float] | None = Field(
        default=None,
        description="Fixed-threshold grid of the controller ablation.",
    )
    weight_grid: list[Cues] | None = Field(
        default=None,
        description="Weight tuples (magnitude, direction, anchor deviation, volatility) of the weight-grid ablation.",
    )

    @model_validator(mode="after")
    def _check_grid(self) -> "AblationSpec":
        if self.thresholds is not None and any(not 0.0 <= tau <= 1.0 for tau in self.thresholds):
            raise ValueError(f"Thresholds must lie in [0, 1], got {self.thresholds}.")
        if self.mode == AblationMode.WEIGHT_GRID:
            if not self.weight_grid:
                raise ValueError("The weight-grid ablation needs a non-empty 'weight_grid'.")
            for weights in self.weight_grid:
                if any(weight < 0 for weight in weights) or not math.isclose(
                    math.fsum(weights), 1.0, rel_tol=0.0, abs_tol=1e-9
                ):
                    raise ValueError(
                        f"Weight tuple {weights} must be non-negative and sum to 1."
                    )
        return self


class ProfileBuildSpec(_BaseSpec):
    tau_ref: float = Field(default=0.35, gt=0.0, lt=1.0)


@dataclass(frozen=True)
class Variant:
    name: str
    config: RunConfig
    threshold: float | None = None


@dataclass
class RowResult:
    labels: dict[str, Any]
    config_path: Path
    summary: RunSummary | None = None
    error: str | None = None

    def to_dict(self, out_dir: Path) -> dict[str, Any]:
        row = dict(self.labels)
        if self.summary is not None:
            row.update(self.summary.to_dict())
        row["error"] = self.error
        row["config"] = self.config_path.relative_to(out_dir).as_posix()
        return row


@dataclass
class SweepReport:
    out_dir: Path
    rows: list[RowResult]
    by_cap: list[dict[str, Any]]

    @property
    def failed(self) -> int:
        return sum(row.error is not None for row in self.rows)

    @property
    def total(self) -> int:
        return len(self.rows)

    def raise_for_failures(self) -> None:
        if self.failed:
            raise PartialSweepFailure(self.failed, self.total)


@dataclass
class AblationReport:
    mode: AblationMode
    out_dir: Path
    rows: list[RowResult]
    variants: list[dict[str, Any]] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return sum(row.error is not None for row in self.rows)

    @property
    def total(self) -> int:
        return len(self.rows)

    def raise_for_failures(self) -> None:
        if self.failed:
            raise PartialSweepFailure(self.failed, self.total)


@dataclass(frozen=True)
class ProfileBuildResult:
    path: Path
    profile: ReferenceProfile
    ensemble_size: int


def resolve_output_dir(cli_out: Path | None, spec_out: Path | None = None) -> Path:
    """CLI/environment value first, then the spec's own output_dir, then the default."""
    return Path(cli_out or spec_out or DEFAULT_OUTPUT_DIR)


def execute(cfg: RunConfig) -> RunTrace:
    """Generate the trajectory of a run config and run the policy on it."""
    trajectory = generate(cfg.trajectory)
    return run(trajectory, cfg.policy_config(), cfg.cost_model())


def write_run_outputs(trace: RunTrace, cfg: RunConfig, out_dir: Path) -> None:
    """Write trace.jsonl, trace.csv and summary.json into `out_dir`."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.jsonl").write_text(trace_to_jsonl(trace), encoding="utf-8")
    (out_dir / "trace.csv").write_text(trace_to_csv(trace), encoding="utf-8")
    (out_dir / "summary.json").write_text(
        summary_to_json(trace, cfg.model_dump(mode="json")), encoding="utf-8"
    )


def cmd_run(config_path: Path, out_dir: Path, seed: int | None = None) -> RunTrace:
    """
    Run one config and write its trace files.

    Args:
        config_path (Path): Run config JSON.
        out_dir (Path): Directory receiving trace.jsonl, trace.csv and summary.json.
        seed (int, optional): Replaces the trajectory seed of the config.

    Returns:
        RunTrace: The trace that was written.

    Raises:
        ConfigurationError: If the config is invalid.
        ProfileNotFoundError: If the referenced profile file does not exist.
    """
    cfg = load_run_config(config_path)
    if seed is not None:
        cfg = cfg.with_seed(seed)

    trace = execute(cfg)
    write_run_outputs(trace, cfg, out_dir)

    logger.info(
        f"Run finished: {trace.summary.actual_full} Full / {len(trace.records)} steps, "
        f"cost {trace.summary.total_cost:.2f}, outputs in {out_dir}"
    )
    return trace


async def run_rows(
    configs: Sequence[RunConfig], jobs: int = 1
) -> list[RunSummary | BaseException]:
    """
    Run independent configs concurrently, at most `jobs` at a time.

    Exceptions are collected rather than raised, allowing partial success. Results keep
    the order of `configs` regardless of completion order.
    """
    semaphore = asyncio.Semaphore(jobs)

    async def _run_row(index: int, cfg: RunConfig) -> RunSummary:
        async with semaphore:
            trace = await asyncio.to_thread(execute, cfg)
            logger.debug(f"Row {index + 1}/{len(configs)} done")
            return trace.summary

    tasks = [_run_row(index, cfg) for index, cfg in enumerate(configs)]
    results = await asyncio.gather(*tasks, return_exceptions=True)
    return list(results)


async def _run_materialized(
    labelled: Sequence[tuple[dict[str, Any], str, RunConfig]],
    out_dir: Path,
    jobs: int,
) -> list[RowResult]:
    configs_dir = out_dir / "configs"
    configs_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for labels, file_name, cfg in labelled:
        config_path = configs_dir / file_name
        dump_run_config(cfg, config_path)
        rows.append(RowResult(labels=labels, config_path=config_path))

    results = await run_rows([cfg for _, _, cfg in labelled], jobs)

    for row, result in zip(rows, results):
        if isinstance(result, BaseException):
            row.error = f"{type(result).__name__}: {result}"
            logger.warning(f"Row {row.labels} failed: {row.error}")
        else:
            row.summary = result
    return rows


def _means(rows: Sequence[RowResult], columns: Sequence[str]) -> dict[str, Any]:
    summaries = [row.summary.to_dict() for row in rows if row.summary is not None]
    means: dict[str, Any] = {"runs": len(summaries)}
    for column in columns:
        values = [summary[column] for summary in summaries]
        means[column] = float(np.mean(values)) if values else math.nan
    return means


async def cmd_sweep(
    spec_path: Path,
    out_dir: Path | None = None,
    jobs: int = 1,
    seed: int | None = None,
) -> SweepReport:
    """
    Run every (cap, seed) pair of a sweep spec and write the sweep tables.

    Per-row configs are materialized under `configs/` before anything runs, so each row can
    be reproduced with `softcap run`. Failed rows are recorded with their error and do not
    stop the sweep.

    Args:
        spec_path (Path): Sweep spec JSON.
        out_dir (Path, optional): Output directory; falls back to the spec's output_dir.
        jobs (int): Maximum concurrent rows.
        seed (int, optional): Replaces the spec's seed list with this single seed.

    Returns:
        SweepReport: Row results and per-cap means.
    """
    spec = read_json_document(SweepSpec, spec_path)
    base = spec.resolve_base(spec_path)
    out_dir = resolve_output_dir(out_dir, spec.output_dir)

    labelled = [
        (
            {"cap": cap, "seed": row_seed},
            f"cap{cap}_seed{row_seed}.json",
            base.with_cap(cap).with_seed(row_seed),
        )
        for cap in spec.caps
        for row_seed in spec.effective_seeds(seed)
    ]
    rows = await _run_materialized(labelled, out_dir, jobs)

    by_cap = [
        {"cap": cap, **_means([row for row in rows if row.labels["cap"] == cap], SUMMARY_COLUMNS)}
        for cap in spec.caps
    ]

    (out_dir / "sweep.csv").write_text(
        rows_to_csv(
            ["cap", "seed", *SUMMARY_COLUMNS, "error", "config"],
            [row.to_dict(out_dir) for row in rows],
        ),
        encoding="utf-8",
    )
    (out_dir / "sweep_by_cap.csv").write_text(
        rows_to_csv(["cap", "runs", *SUMMARY_COLUMNS], by_cap), encoding="utf-8"
    )
    (out_dir / "sweep_plot.csv").write_text(
        rows_to_csv(
            ["cap", "mean_actual_full"],
            [{"cap": entry["cap"], "mean_actual_full": entry["actual_full"]} for entry in by_cap],
        ),
        encoding="utf-8",
    )

    report = SweepReport(out_dir=out_dir, rows=rows, by_cap=by_cap)
    logger.info(
        f"Sweep finished: {report.total - report.failed}/{report.total} rows succeeded, outputs in {out_dir}"
    )
    return report


def _with_observer(base: RunConfig, **update: Any) -> RunConfig:
    observer = ObserverConfig(**{**base.observer.model_dump(), **update})
    return base.model_copy(update={"observer": observer})


def _with_fixed_threshold(base: RunConfig, threshold: float | None) -> RunConfig:
    policy = base.policy.model_copy(update={"fixed_threshold": threshold})
    return base.model_copy(update={"policy": policy})


def ablation_variants(spec: AblationSpec, base: RunConfig) -> list[Variant]:
    """
    Expand an ablation spec into named variants of the base config.

    Raises:
        ConfigurationError: If a cue cannot be left out because no weight would remain.
    """
    weights = base.observer.weights

    match spec.mode:
        case AblationMode.CONTROLLER:
            grid = spec.thresholds or DEFAULT_THRESHOLD_GRID
            return [Variant("pi", _with_fixed_threshold(base, None))] + [
                Variant(f"fixed-{tau:g}", _with_fixed_threshold(base, tau), threshold=tau)
                for tau in grid
            ]

        case AblationMode.CUE_LEAVE_ONE_OUT:
            variants = [Variant("all", base)]
            for index, name in enumerate(CUE_NAMES):
                remaining = 1.0 - weights[index]
                if remaining <= 0:
                    raise ConfigurationError(
                        f"Cannot leave out cue '{name}': it carries all of the weight."
                    )
                renormalized = tuple(
                    0.0 if other == index else weight / remaining
                    for other, weight in enumerate(weights)
                )
                variants.append(Variant(f"no-{name}", _with_observer(base, weights=renormalized)))
            return variants

        case AblationMode.CUE_ISOLATED:
            return [
                Variant(
                    f"only-{name}",
                    _with_observer(
                        base,
                        weights=tuple(1.0 if other == index else 0.0 for other in range(len(CUE_NAMES))),
                    ),
                )
                for index, name in enumerate(CUE_NAMES)
            ]

        case AblationMode.WEIGHT_GRID:
            return [
                Variant(
                    "w-" + "-".join(f"{weight:g}" for weight in grid_weights),
                    _with_observer(base, weights=grid_weights),
                )
                for grid_weights in spec.weight_grid
            ]

        case AblationMode.INCREMENT_ON_OFF:
            return [
                Variant("increment-off", _with_observer(base, increment_enabled=False)),
                Variant("increment-on", _with_observer(base, increment_enabled=True)),
            ]


def match_fixed_threshold(variants: list[Variant], means: dict[str, dict[str, Any]]) -> str | None:
    """
    Name of the fixed-threshold variant whose mean Full count is closest to the PI variant's.

    Ties go to the larger threshold. Returns None when nothing can be matched.
    """
    target = means["pi"]["actual_full"]
    candidates = [
        variant
        for variant in variants
        if variant.threshold is not None and not math.isnan(means[variant.name]["actual_full"])
    ]
    if math.isnan(target) or not candidates:
        return None

    best = min(
        candidates,
        key=lambda variant: (abs(means[variant.name]["actual_full"] - target), -variant.threshold),
    )
    return best.name


ABLATION_COLUMNS = ["actual_full", "crossing_full", "total_cost", "speedup", "mean_approx_error"]


async def cmd_ablate(
    spec_path: Path,
    out_dir: Path | None = None,
    jobs: int = 1,
    seed: int | None = None,
) -> AblationReport:
    """
    Run every variant of an ablation over the spec's seeds and write the ablation tables.

    Args:
        spec_path (Path): Ablation spec JSON.
        out_dir (Path, optional): Output directory; falls back to the spec's output_dir.
        jobs (int): Maximum concurrent rows.
        seed (int, optional): Replaces the spec's seed list with this single seed.

    Returns:
        AblationReport: Row results and one mean row per variant.
    """
    spec = read_json_document(AblationSpec, spec_path)
    base = spec.resolve_base(spec_path)
    out_dir = resolve_output_dir(out_dir, spec.output_dir)

    variants = ablation_variants(spec, base)
    labelled = [
        (
            {"variant": variant.name, "seed": row_seed},
            f"{variant.name}_seed{row_seed}.json",
            variant.config.with_seed(row_seed),
        )
        for variant in variants
        for row_seed in spec.effective_seeds(seed)
    ]
    rows = await _run_materialized(labelled, out_dir, jobs)

    means = {
        variant.name: _means([row for row in rows if row.labels["variant"] == variant.name], ABLATION_COLUMNS)
        for variant in variants
    }
    matched = match_fixed_threshold(variants, means) if spec.mode == AblationMode.CONTROLLER else None
    variant_rows = [
        {"variant": variant.name, **means[variant.name], "matched": variant.name == matched}
        for variant in variants
    ]

    (out_dir / "ablation_runs.csv").write_text(
        rows_to_csv(
            ["variant", "seed", *ABLATION_COLUMNS, "error", "config"],
            [row.to_dict(out_dir) for row in rows],
        ),
        encoding="utf-8",
    )
    (out_dir / "ablation.csv").write_text(
        rows_to_csv(["variant", "runs", *ABLATION_COLUMNS, "matched"], variant_rows),
        encoding="utf-8",
    )

    report = AblationReport(mode=spec.mode, out_dir=out_dir, rows=rows, variants=variant_rows)
    logger.info(
        f"Ablation '{spec.mode}' finished: {len(variants)} variants, "
        f"{report.total - report.failed}/{report.total} rows succeeded, outputs in {out_dir}"
    )
    return report


def cmd_profile_build(
    spec_path: Path,
    out_dir: Path | None = None,
    seed: int | None = None,
) -> ProfileBuildResult:
    """
    Build a reference profile from the spec's seed ensemble and write `profile.json`.

    Raises:
        ConfigurationError: If the spec is invalid.
        DegenerateProfileError: If the reference policy executed no Full evaluations.
    """
    spec = read_json_document(ProfileBuildSpec, spec_path)
    base = spec.resolve_base(spec_path)
    out_dir = resolve_output_dir(out_dir, spec.output_dir)

    seeds = spec.effective_seeds(seed)
    trajectories = [generate(base.with_seed(row_seed).trajectory) for row_seed in seeds]
    profile = build_profile(spec.tau_ref, trajectories, base.policy_config(resolve_profile=False))

    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "profile.json"
    save_profile(profile, path)

    logger.info(f"Profile written to {path}")
    return ProfileBuildResult(path=path, profile=profile, ensemble_size=len(seeds))
