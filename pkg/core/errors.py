"""
Exception hierarchy shared by every songspace module.

Each error carries the process exit code the CLI reports for it:
1 = usage, 2 = I/O or file format, 3 = data invariant.
"""

from typing import Optional


class SongSpaceError(Exception):
    """Base class for all songspace errors."""

    exit_code = 3


class UsageError(SongSpaceError):
    """Bad command-line usage."""

    exit_code = 1


class FileFormatError(SongSpaceError):
    """Binary file with bad magic, truncated data or trailing bytes."""

    exit_code = 2


class DataInvariantError(SongSpaceError, ValueError):
    """Input data violates a documented invariant."""

    exit_code = 3


class DatasetFormatError(DataInvariantError):
    """Malformed line in a dataset or similarity file."""

    def __init__(self, message: str, line_no: Optional[int] = None, path: Optional[str] = None):
        self.line_no = line_no
        self.path = path
        where = ""
        if path is not None and line_no is not None:
            where = f"{path}:{line_no}: "
        elif line_no is not None:
            where = f"line {line_no}: "
        super().__init__(f"{where}{message}")


class DimensionMismatchError(DataInvariantError):
    """Vector or matrix dimensions do not agree."""


class ConfigError(DataInvariantError):
    """Invalid configuration value or combination."""


class UnusableTaskError(DataInvariantError):
    """A requested task has no usable examples or queries."""
