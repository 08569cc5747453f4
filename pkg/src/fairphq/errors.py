"""Exception taxonomy shared across the package.

Every error raised by fairphq derives from FairPHQError. The CLI maps the
three branches onto distinct exit codes: configuration problems exit 2,
numeric failures exit 3, and I/O or file-format problems exit 4.
"""

from __future__ import annotations


class FairPHQError(Exception):
    """Base class for all fairphq errors."""


class ConfigError(FairPHQError, ValueError):
    """A configuration value violates its documented contract."""


class InputError(FairPHQError, ValueError):
    """A runtime input violates a function's precondition."""


class ModeError(InputError):
    """An operation was asked of a model trained in an incompatible mode."""


class NumericError(FairPHQError, ArithmeticError):
    """A computation produced non-finite values."""


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss and cannot continue."""

    def __init__(self, epoch: int, batch: int) -> None:
        super().__init__(f"non-finite training loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class FileFormatError(FairPHQError, ValueError):
    """A file exists but does not parse as the expected artifact."""


class DatasetFormatError(FileFormatError):
    """A dataset file exists but does not parse as a valid cohort."""

    def __init__(self, path: str, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no
