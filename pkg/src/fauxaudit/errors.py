"""Exception hierarchy shared across the package."""


class FauxError(Exception):
    """Base class for all package errors."""


class ContractError(FauxError, ValueError):
    """An argument violated a documented precondition (shapes, ranges)."""


class SingularityError(FauxError, ArithmeticError):
    """A matrix expected to be positive definite was not."""


class DegenerateGradientError(FauxError, ArithmeticError):
    """A vector was too small to normalize."""


class DivergenceError(FauxError, ArithmeticError):
    """Training or an iterative attack produced a non-finite value."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ProvenanceError(FauxError, KeyError):
    """A synthetic-only operation was asked about a row without provenance."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing provenance"


class UndefinedMetricError(FauxError, ValueError):
    """A ranking metric is undefined for the given input."""


class ConfigError(FauxError, ValueError):
    """A run configuration is invalid or incomplete."""
