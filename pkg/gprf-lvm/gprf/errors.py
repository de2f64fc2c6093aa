"""
Exception hierarchy for the GPRF toolkit.

Every error raised by the library derives from GprfError and carries the
process exit code the command-line harness reports for it:
- 1: validation problems (configuration, shapes, hyperparameters, files)
- 2: numerical failures (factorizations, indefinite precisions)
- 3: size guard (dense operations refused)
"""

from typing import Optional


class GprfError(Exception):
    """Base exception for GPRF operations."""

    exit_code = 1


class ConfigError(GprfError):
    """Invalid or unknown experiment configuration."""


class InvalidHyperparameterError(GprfError):
    """Nonpositive hyperparameter or inconsistent lengthscale grouping."""


class DimensionError(GprfError):
    """Array shapes or indices that do not fit together."""


class PartitionKindError(GprfError):
    """Operation requires a different kind of partition."""


class StorageError(GprfError):
    """Failure reading or writing a result file."""


class NumericalError(GprfError):
    """
    Factorization or inversion failure.

    Args:
        message: Human-readable description
        label: Name of the offending term, e.g. ``edge (2, 5)``
    """

    exit_code = 2

    def __init__(self, message: str, label: Optional[str] = None):
        self.label = label
        if label:
            message = f"{label}: {message}"
        super().__init__(message)


class SizeGuardError(GprfError):
    """Dense computation refused because the problem is too large."""

    exit_code = 3
