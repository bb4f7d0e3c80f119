"""Tests for the formatter module."""

import csv
import io
import json
import math
import re
from pathlib import Path

import pytest

from softcap.formatter import (
    format_ablation_report,
    format_run_report,
    format_sweep_report,
    format_table,
    rows_to_csv,
    summary_to_json,
    trace_to_csv,
    trace_to_jsonl,
)
from softcap.policy import PolicyConfig, RunTrace, run
from softcap.trajectory import TrajectorySpec, generate


@pytest.fixture
def small_trace(unit_cost) -> RunTrace:
    """A 30-step smooth-noise run with Full, Cache and crossing steps."""
    trajectory = generate(TrajectorySpec(steps=30, tokens=4, channels=4, seed=1))
    return run(trajectory, PolicyConfig(warmup_steps=5, total_steps=30, controller={"cap": 10}), unit_cost)


class TestRowsToCsv:
    """Tests for the generic CSV encoder."""

    def test_header_and_cells(self):
        """Columns come first, missing keys and None become empty cells."""
        text = rows_to_csv(["a", "b", "c"], [{"a": 1, "b": None}, {"a": 2, "b": True, "c": "x"}])

        assert text == "a,b,c\n1,,\n2,true,x\n"

    def test_float_digits(self):
        """Floats are written with 17 significant digits."""
        text = rows_to_csv(["v"], [{"v": 0.1}])

        assert text.splitlines()[1] == "0.10000000000000001"
        assert float(text.splitlines()[1]) == 0.1

    def test_quoting(self):
        """Cells containing commas are quoted."""
        text = rows_to_csv(["error"], [{"error": "ConfigurationError: a, b"}])

        assert text.splitlines()[1] == '"ConfigurationError: a, b"'

    def test_no_rows(self):
        """An empty table still has its header."""
        assert rows_to_csv(["a", "b"], []) == "a,b\n"


class TestTraceEncoders:
    """Tests for trace JSONL, CSV and summary documents."""

    def test_jsonl_layout(self, small_trace: RunTrace):
        """One line per step plus a trailing summary line."""
        lines = trace_to_jsonl(small_trace).splitlines()

        assert len(lines) == 31
        assert json.loads(lines[0])["step"] == 0
        assert json.loads(lines[-1]) == {"summary": small_trace.summary.to_dict()}

    def test_jsonl_is_stable(self, small_trace: RunTrace):
        """Encoding the same trace twice gives identical text."""
        assert trace_to_jsonl(small_trace) == trace_to_jsonl(small_trace)

    def test_csv_matches_jsonl(self, small_trace: RunTrace):
        """Every CSV cell equals the JSONL value it was written from."""
        jsonl_rows = [json.loads(line) for line in trace_to_jsonl(small_trace).splitlines()[:-1]]
        csv_rows = list(csv.DictReader(io.StringIO(trace_to_csv(small_trace))))

        assert len(csv_rows) == len(jsonl_rows)
        for csv_row, json_row in zip(csv_rows, jsonl_rows):
            assert list(csv_row) == list(json_row)
            for key, value in json_row.items():
                cell = csv_row[key]
                if isinstance(value, bool):
                    assert cell == ("true" if value else "false")
                elif isinstance(value, float):
                    assert float(cell) == value
                else:
                    assert cell == str(value)

    def test_summary_document(self, small_trace: RunTrace):
        """The summary document carries config, cost model, summary and the final anchor."""
        document = json.loads(summary_to_json(small_trace, {"trajectory": {"seed": 1}}))

        assert list(document) == ["config", "cost_model", "summary", "final_anchor"]
        assert document["config"] == {"trajectory": {"seed": 1}}
        assert document["cost_model"]["c_full"] == 1.0
        assert document["summary"]["actual_full"] == small_trace.summary.actual_full
        assert document["final_anchor"]["anchor_step"] == small_trace.final_anchor.anchor_step

    def test_readme_documents_trace_fields(self, small_trace: RunTrace):
        """The README lists the per-step and summary fields in the order they are written."""
        readme = (Path(__file__).parents[1] / "README.md").read_text(encoding="utf-8")
        step_table = readme.split("Per-step fields, in order:")[1].split("Summary fields")[0]
        summary_line = readme.split("Summary fields, in order:")[1].split("\n\n")[0]

        documented_steps = [
            name
            for line in step_table.splitlines()
            if line.startswith("| `")
            for name in re.findall(r"`(\w+)`", line.split("|")[1])
        ]

        assert documented_steps == list(small_trace.records[0].to_dict())
        assert re.findall(r"`(\w+)`", summary_line) == list(small_trace.summary.to_dict())


class TestTables:
    """Tests for terminal tables and reports."""

    def test_format_table(self):
        """Cells are right-aligned under a dashed rule."""
        table = format_table(["cap", "speedup"], [{"cap": 8, "speedup": 3.14159}, {"cap": 16, "speedup": None}])

        assert table.splitlines() == [
            "cap  speedup",
            "---  -------",
            "  8     3.14",
            " 16        -",
        ]

    def test_nan_and_bool_cells(self):
        """NaN renders as '-', True as 'yes' and False as blank."""
        table = format_table(["m", "ok"], [{"m": math.nan, "ok": True}, {"m": 1.0, "ok": False}])

        lines = table.splitlines()
        assert lines[2].split() == ["-", "yes"]
        assert lines[3].split() == ["1.00"]

    def test_run_report(self, small_trace: RunTrace):
        """The run report lists every summary counter."""
        report = format_run_report(small_trace.summary, 30)

        assert report.startswith("Run summary (30 steps):")
        for name in small_trace.summary.to_dict():
            assert name in report

    def test_sweep_report(self):
        """Per-cap rows with a failure footer when rows failed."""
        rows = [{"cap": 8, "runs": 2, "actual_full": 10.5, "speedup": 2.0}]

        report = format_sweep_report(rows, failed=1, total=3)

        assert report.startswith("Cap sweep (3 runs):")
        assert "10.50" in report
        assert "1 of 3 rows failed" in report

    def test_empty_sweep_report(self):
        """A sweep without rows says so."""
        assert format_sweep_report([], failed=0, total=0) == "Cap sweep (0 runs):\n\nNo runs."

    def test_ablation_report(self):
        """Variants are listed with the matched marker."""
        rows = [
            {"variant": "pi", "actual_full": 20.0},
            {"variant": "fixed-0.35", "actual_full": 21.0, "matched": True},
        ]

        report = format_ablation_report("controller", rows, failed=0, total=4)

        assert report.startswith("Ablation: controller (4 runs)")
        assert "fixed-0.35" in report
        assert "yes" in report
        assert "failed" not in report
