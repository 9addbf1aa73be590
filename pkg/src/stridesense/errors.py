"""Exception hierarchy shared across the package.

Two broad families matter to the CLI: configuration problems (bad flags,
impossible parameter combinations, exit code 2) and data problems (broken
input files, streams that cannot be calibrated, exit code 3).
"""


class StrideSenseError(Exception):
    """Base class for all package errors."""


class ConfigError(StrideSenseError):
    """Invalid configuration or parameter combination (CLI exit code 2)."""


class DataError(StrideSenseError):
    """Invalid or unusable input data (CLI exit code 3)."""


class ParseError(DataError):
    """A malformed input line; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyStreamError(DataError):
    """No slots survived filtering."""


class CalibrationError(DataError):
    """Calibration could not derive windows (too few usable minima)."""


class CoverageError(DataError):
    """Tag expansion is missing coverage for at least one cluster."""
