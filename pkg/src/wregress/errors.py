"""Exception types shared across the package.

Every error raised on a documented failure path derives from
:class:`WregressError`, so callers (notably the CLI) can map failures to
stable exit codes without catching broad builtins.
"""

from __future__ import annotations

__all__ = [
    "WregressError",
    "DimensionError",
    "EmptyMeasureError",
    "InvalidCovarianceError",
    "RangeError",
    "InfeasibleError",
    "SizeCapError",
    "NumericalError",
    "DegenerateTimestampsError",
    "StepSizeError",
]


class WregressError(Exception):
    """Base class for all package errors."""


class DimensionError(WregressError, ValueError):
    """Operands have incompatible point dimensions."""


class EmptyMeasureError(WregressError, ValueError):
    """A measure with no atoms was supplied where mass is required."""


class InvalidCovarianceError(WregressError, ValueError):
    """A covariance matrix is not symmetric positive semidefinite."""


class RangeError(WregressError, ValueError):
    """A scalar or index argument lies outside its admissible range."""


class InfeasibleError(WregressError):
    """The requested marginal/pairwise constraints admit no plan."""


class SizeCapError(WregressError):
    """The dense plan tensor would exceed the configured size cap."""


class NumericalError(WregressError, ArithmeticError):
    """An overflow guard tripped inside an iterative solver."""


class DegenerateTimestampsError(WregressError, ValueError):
    """Fewer than two distinct timestamps: the line fit is unidentifiable."""


class StepSizeError(WregressError, ArithmeticError):
    """Gradient stepping diverged (non-finite iterates)."""
