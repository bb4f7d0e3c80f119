"""Shared fixtures and helpers for test suite."""

import json
import shutil
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pytest

from softcap.cost_model import COST_PRESETS, CostModel
from softcap.trajectory import FeatureTensor


@pytest.fixture
def tests_data_path() -> Path:
    """Returns path to the static test data directory."""
    return Path(__file__).parent / "tests_data"


@pytest.fixture
def run_config_path(tests_data_path: Path, tmp_path: Path) -> Path:
    """Copy of the sample run config in a scratch directory, so relative paths resolve there."""
    target = tmp_path / "run.json"
    shutil.copy(tests_data_path / "configs" / "run_small.json", target)
    return target


@pytest.fixture
def run_config_document(tests_data_path: Path) -> dict[str, Any]:
    """The sample run config as a plain dictionary, ready to be modified by a test."""
    with open(tests_data_path / "configs" / "run_small.json", "r") as f:
        return json.load(f)


@pytest.fixture
def unit_cost() -> CostModel:
    """Cost model with C_full = 1 and no observer/controller overhead."""
    return COST_PRESETS["unit"]


@pytest.fixture
def write_json(tmp_path: Path) -> Callable[[str, Any], Path]:
    """Returns a helper writing a JSON document into the scratch directory."""

    def _write(name: str, document: Any) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def constant_trajectory() -> Callable[..., list[FeatureTensor]]:
    """Returns a factory for trajectories whose every step holds the same tensor."""

    def _make(steps: int, tokens: int = 2, channels: int = 3, value: float = 1.0) -> list[FeatureTensor]:
        return [FeatureTensor(np.full((tokens, channels), value)) for _ in range(steps)]

    return _make