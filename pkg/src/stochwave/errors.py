"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary precondition violations (bad
arguments, dimension mismatches, unsupported exponents).  The classes below
exist where callers need to react differently: the CLI maps them to exit
codes and the Monte Carlo harness attaches provenance to failed samples.
"""


class StochwaveError(Exception):
    """Base class for package-specific errors."""


class ConfigError(StochwaveError):
    """Invalid configuration text or CLI usage (exit code 2)."""


class NumericError(StochwaveError):
    """A computation produced non-finite or otherwise unusable numbers (exit code 3)."""


class NotPositiveSemidefiniteError(NumericError):
    """A covariance matrix failed Cholesky factorization even with maximal jitter."""

    def __init__(self, message, smallest_eigenvalue=None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class SampleFailureError(NumericError):
    """A Monte Carlo sample produced a non-finite state.

    Carries ``sample_index`` and ``level`` so the experiment harness can
    abort with provenance instead of silently dropping the sample.
    """

    def __init__(self, message, sample_index, level):
        super().__init__(message)
        self.sample_index = sample_index
        self.level = level


class InsufficientDataError(StochwaveError):
    """Not enough usable rows/points for a statistical fit."""
