"""Encoders for traces and reports: JSONL and CSV files plus compact console tables."""

import csv
import io
import json
import math
from typing import Any, Iterable, Sequence, TYPE_CHECKING

if TYPE_CHECKING:
    from softcap.policy import RunSummary, RunTrace


SUMMARY_COLUMNS = [
    "actual_full",
    "crossing_full",
    "warmup_full",
    "guard_full",
    "total_cost",
    "speedup",
]


def _format_value(value: Any) -> str:
    """Render a CSV cell; floats keep enough digits to round-trip exactly."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def rows_to_csv(columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> str:
    """
    Encode rows as CSV text with a header line.

    Args:
        columns: Column names, in output order. Missing keys become empty cells.
        rows: One dictionary per row.

    Returns:
        The CSV document, newline-terminated.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_value(row.get(column)) for column in columns])
    return buffer.getvalue()


def trace_to_jsonl(trace: "RunTrace") -> str:
    """One JSON object per step, then a trailing `{"summary": ...}` line."""
    lines = [json.dumps(record.to_dict()) for record in trace.records]
    lines.append(json.dumps({"summary": trace.summary.to_dict()}))
    return "\n".join(lines) + "\n"


def trace_to_csv(trace: "RunTrace") -> str:
    """One CSV row per step, same fields as the JSONL encoding."""
    if not trace.records:
        return ""
    rows = [record.to_dict() for record in trace.records]
    return rows_to_csv(list(rows[0]), rows)


def summary_to_json(trace: "RunTrace", run_config: dict[str, Any]) -> str:
    document = {
        "config": run_config,
        "cost_model": trace.cost_model.model_dump(mode="json"),
        "summary": trace.summary.to_dict(),
        "final_anchor": trace.final_anchor.to_dict(),
    }
    return json.dumps(document, indent=2) + "\n"


def _format_cell(value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    if isinstance(value, bool):
        return "yes" if value else ""
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def format_table(columns: Sequence[str], rows: Sequence[dict[str, Any]]) -> str:
    """Right-aligned plain-text table for terminal output."""
    cells = [[_format_cell(row.get(column)) for column in columns] for row in rows]
    widths = [
        max([len(column)] + [len(line[index]) for line in cells])
        for index, column in enumerate(columns)
    ]

    lines = ["  ".join(column.rjust(width) for column, width in zip(columns, widths))]
    lines.append("  ".join("-" * width for width in widths))
    for line in cells:
        lines.append("  ".join(cell.rjust(width) for cell, width in zip(line, widths)))
    return "\n".join(lines)


def format_run_report(summary: "RunSummary", total_steps: int) -> str:
    """Summary counters of one run."""
    values = summary.to_dict()
    lines = [f"Run summary ({total_steps} steps):"]
    width = max(len(name) for name in values)
    for name, value in values.items():
        lines.append(f"  {name.ljust(width)}  {_format_cell(value)}")
    return "\n".join(lines)


def format_sweep_report(by_cap: Sequence[dict[str, Any]], failed: int, total: int) -> str:
    """Per-cap means of a cap sweep, with a failure footer when rows failed."""
    header = f"Cap sweep ({total} runs):"
    if not by_cap:
        return f"{header}\n\nNo runs."

    output = f"{header}\n{format_table(['cap', 'runs', *SUMMARY_COLUMNS], by_cap)}"
    if failed:
        output += f"\n\n* {failed} of {total} rows failed; see the error column of sweep.csv"
    return output


def format_ablation_report(
    mode: str, variants: Sequence[dict[str, Any]], failed: int, total: int
) -> str:
    """One row per ablation variant."""
    columns = [
        "variant",
        "actual_full",
        "crossing_full",
        "total_cost",
        "speedup",
        "mean_approx_error",
        "matched",
    ]
    output = f"Ablation: {mode} ({total} runs)\n{format_table(columns, variants)}"
    if failed:
        output += f"\n\n* {failed} of {total} rows failed; see the error column of ablation_runs.csv"
    return output
