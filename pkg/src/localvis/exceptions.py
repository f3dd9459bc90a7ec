"""Exception types shared across the package.

Each maps to one CLI exit code (see :mod:`localvis.cli`).
"""


class LocalVisError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LocalVisError, ValueError):
    exit_code = 2


class InputValidationError(LocalVisError, ValueError):
    exit_code = 2


class FormatError(LocalVisError, ValueError):
    """A data file does not match the expected binary layout."""

    exit_code = 2


class NumericalError(LocalVisError, FloatingPointError):
    """A non-finite value appeared inside a forward pass or update.

    ``where`` names the layer or module that produced it.
    """

    exit_code = 3

    def __init__(self, where, message=None):
        self.where = where
        super().__init__(message or f"non-finite values in {where}")


class GradientIsolationError(LocalVisError, RuntimeError):
    """The probe loss reached a representational parameter."""

    exit_code = 4
