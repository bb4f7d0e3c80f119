"""Exception hierarchy shared by the library and the CLI."""

from enum import IntEnum
from pathlib import Path


class ExitCode(IntEnum):
    OK = 0
    CONFIG_ERROR = 2
    RUNTIME_ERROR = 3
    PARTIAL_FAILURE = 4


class SoftCapError(Exception):
    """Base class for every error raised by softcap."""


class ConfigurationError(SoftCapError, ValueError):
    """Raised when a spec or config document is invalid or inconsistent."""


class TraceParseError(SoftCapError, ValueError):
    """Raised when a recorded trace file does not follow the trace format."""

    def __init__(self, reason: str, step: int | None = None):
        self.reason = reason
        self.step = step
        location = "header" if step is None else f"step {step}"
        super().__init__(f"Malformed trace ({location}): {reason}")


class StateError(SoftCapError, RuntimeError):
    """Raised when the cache anchor is used inconsistently."""


class OrderingError(StateError):
    """Raised when a step is queried before (or at) the anchor it depends on."""

    def __init__(self, step: int, anchor_step: int):
        self.step = step
        self.anchor_step = anchor_step
        super().__init__(f"Step {step} is not after anchor step {anchor_step}.")


class GuardViolationError(StateError):
    """Raised when a cached approximation is requested beyond the max skip distance."""

    def __init__(self, distance: int, max_skip: int):
        self.distance = distance
        self.max_skip = max_skip
        super().__init__(
            f"Cache distance {distance} exceeds max skip {max_skip}; "
            "a guard Full should have been executed."
        )


class InputError(SoftCapError, ValueError):
    """Raised when observer inputs do not share a shape."""


class DegenerateProfileError(SoftCapError, ValueError):
    """Raised when a reference ensemble produced no Full evaluations."""


class AccountingError(SoftCapError, ValueError):
    """Raised when cost accounting receives impossible counts."""


class ProfileNotFoundError(SoftCapError, FileNotFoundError):
    """Raised when a config references a reference-profile file that does not exist."""

    def __init__(self, path: Path):
        self.path = path
        super().__init__(f"Reference profile not found: {path}")


class PartialSweepFailure(SoftCapError):
    """Raised after a sweep or ablation finished with failed rows."""

    def __init__(self, failed: int, total: int):
        self.failed = failed
        self.total = total
        super().__init__(f"{failed} of {total} rows failed.")
