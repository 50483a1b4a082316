"""Exception types shared across the package."""

from __future__ import annotations


class GazeStatsError(Exception):
    """Base class for all package errors."""


class DegenerateInput(GazeStatsError, ValueError):
    """Input is numerically degenerate (zero vector, rank-deficient scatter, ...)."""


class BehindCamera(GazeStatsError, ValueError):
    """Direction does not point into the camera frustum (z <= 0)."""


class InsufficientData(GazeStatsError, ValueError):
    """Too few points for the requested estimate."""


class NoData(GazeStatsError, ValueError):
    """No samples fall into the range an aggregate is defined on."""


class ConfigError(GazeStatsError, ValueError):
    """Configuration violates its invariants."""


class SchemaError(GazeStatsError, ValueError):
    """A record or reference in an input file violates the data schema."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.message = message
