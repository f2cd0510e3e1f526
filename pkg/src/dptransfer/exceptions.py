"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """Inputs violate a documented precondition (shape, range, count)."""


class NumericalFailureError(ArithmeticError):
    """A linear system could not be solved to the required accuracy."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateDataError(NumericalFailureError):
    """Training data leaves no usable smoothing level for a mapping."""


class FormatError(ValueError):
    """A data file or model archive is malformed."""


class VersionError(FormatError):
    """A model archive declares a format version this build cannot read."""
