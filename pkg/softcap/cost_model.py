"""Per-step and per-run compute accounting."""

from pydantic import BaseModel, ConfigDict, Field, model_validator

from softcap.errors import AccountingError


class CostModel(BaseModel):
    """
    Abstract cost units of one Full step, one Cache step, and the observer/controller overheads.

    The defaults follow the `flux-dev-50` preset: a 50-step all-Full run costs 3719.50 units.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    c_full: float = Field(default=74.39, gt=0.0)
    c_cache: float = Field(default=1.0, gt=0.0)
    c_obs: float = Field(default=0.01, ge=0.0)
    c_ctrl: float = Field(default=0.01, ge=0.0)

    @model_validator(mode="after")
    def _check_ordering(self) -> "CostModel":
        if not self.c_cache < self.c_full:
            raise ValueError(
                f"A Cache step must be cheaper than a Full step (c_cache={self.c_cache}, c_full={self.c_full})."
            )
        return self

    @property
    def overhead(self) -> float:
        return self.c_obs + self.c_ctrl

    def step_cost(self, full: bool) -> float:
        return (self.c_full if full else self.c_cache) + self.overhead


COST_PRESETS: dict[str, CostModel] = {
    "flux-dev-50": CostModel(c_full=74.39, c_cache=1.0, c_obs=0.01, c_ctrl=0.01),
    "unit": CostModel(c_full=1.0, c_cache=0.01, c_obs=0.0, c_ctrl=0.0),
}


def total_cost(model: CostModel, n_full: int, total_steps: int) -> float:
    """
    Cost of a run with `n_full` Full steps out of `total_steps`.

    Raises:
        AccountingError: If the counts are impossible.
    """
    if n_full < 0 or total_steps < 1 or n_full > total_steps:
        raise AccountingError(
            f"Cannot account for {n_full} Full steps in a {total_steps}-step run."
        )
    return (
        n_full * model.c_full
        + (total_steps - n_full) * model.c_cache
        + total_steps * model.overhead
    )


def speedup(model: CostModel, trace_cost: float, total_steps: int) -> float:
    """
    Speedup of a run against the all-Full baseline of the same length.

    Raises:
        AccountingError: If `trace_cost` is not positive.
    """
    if trace_cost <= 0:
        raise AccountingError(f"Run cost must be positive, got {trace_cost}.")
    return total_steps * model.c_full / trace_cost
