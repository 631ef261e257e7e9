"""Exception hierarchy.

ValidationError and its subclasses signal bad inputs (CLI exit code 1);
every other DcmdError is a runtime failure (exit code 2).
"""


class DcmdError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DcmdError):
    """Invalid user input: malformed files, bad parameters, contract violations."""


class TableFormatError(ValidationError):
    """A count table failed to parse; message carries row/column location."""


class EmptyResultError(ValidationError):
    """A filter or screen removed everything."""


class DegenerateOtuError(DcmdError):
    """An OTU column cannot support a mixture fit (e.g. all zeros)."""


class DegeneratePosteriorError(DcmdError):
    """No mixture component explains an observed count."""


class FitFailureError(DcmdError):
    """Weight optimization did not converge; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class QuadratureError(DcmdError):
    """Numerical integration did not reach the requested accuracy."""
