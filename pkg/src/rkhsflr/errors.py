"""Exception types shared across the package."""

from __future__ import annotations


class GridMismatchError(ValueError):
    """Two functional objects live on different quadrature grids."""


class DatasetParseError(ValueError):
    """A dataset file violates the expected CSV layout.

    Carries the 1-based file row and column of the offending cell when known.
    """

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        location = ""
        if row is not None and column is not None:
            location = f" (row {row}, column {column})"
        elif row is not None:
            location = f" (row {row})"
        super().__init__(message + location)
        self.row = row
        self.column = column


class DerivativeOrderError(ValueError):
    """Requested derivative order is outside what the kernel supports."""


class InvalidKernelError(ValueError):
    """A kernel matrix fails symmetry or shape requirements."""


class DegenerateDesignError(RuntimeError):
    """The polynomial design block is numerically rank deficient."""


class FactorizationError(RuntimeError):
    """A positive definite factorization failed even after a jitter retry."""


class GcvUndefinedError(RuntimeError):
    """The GCV denominator vanished: effective degrees of freedom reached n."""


class LambdaSelectionError(RuntimeError):
    """No usable point in the regularization search grid."""


class TruncationError(RuntimeError):
    """A spectral truncation hit a nonpositive eigenvalue."""


class ConfigError(ValueError):
    """Invalid or unknown run configuration. Carries the offending key."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
