"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: parameter/shape/validation problems
exit 1, numeric failures exit 2, I/O problems exit 3.
"""


class StyleMatchError(Exception):
    """Base class for all package errors."""


class ParameterError(StyleMatchError, ValueError):
    """An argument is outside its documented range or otherwise invalid."""


class ShapeError(StyleMatchError, ValueError):
    """Array arguments have incompatible shapes."""


class NumericGuardError(StyleMatchError, ArithmeticError):
    """A conversion hit a numerically unstable regime (e.g. alpha_t ~ 0)."""


class TrainingDivergedError(StyleMatchError, RuntimeError):
    """An optimization loop produced NaN/inf state."""
