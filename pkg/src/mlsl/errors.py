"""Exception types shared across the package."""


class MLSLError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(MLSLError, ValueError):
    """A parameter lies outside the domain of an operation."""


class SuperluminalError(InvalidParameterError):
    """A velocity with |v| >= 1 was supplied where |v| < 1 is required."""


class NotInSigmaError(InvalidParameterError):
    """(v, omega) is neither a zero-spin, parallel nor perpendicular pair.

    ``mismatch`` holds the unit direction of the spin mismatch vector q
    (the part of pi not aligned with omega), when it could be computed.
    """

    def __init__(self, message, mismatch=None):
        super().__init__(message)
        self.mismatch = mismatch


class GridMismatchError(MLSLError, ValueError):
    """Fields defined on different grids were combined."""


class DomainTruncationWarning(UserWarning):
    """Field energy near the box boundary exceeds the configured fraction."""


class NotAFunctionalError(MLSLError, ValueError):
    """Angular momentum was requested for a reduced system with P != 0."""


class WrongRegimeError(MLSLError, ValueError):
    """An operation restricted to v = 0 solitons received v != 0."""


class DegenerateFrameError(MLSLError, ArithmeticError):
    """The constraint Gram matrix is singular."""


class StepSizeError(MLSLError, ValueError):
    """Time step violates the CFL bound."""


class DivergenceError(MLSLError, ArithmeticError):
    """Non-finite values appeared during time integration.

    ``last_state`` and ``time`` record the last finite state.
    """

    def __init__(self, message, last_state=None, time=None):
        super().__init__(message)
        self.last_state = last_state
        self.time = time


class ResolutionError(MLSLError, ArithmeticError):
    """A root bracket or quadrature could not be resolved."""


class BasisError(MLSLError, ArithmeticError):
    """The reference form is not positive definite on the projected basis."""


class ConfigError(MLSLError, ValueError):
    """Malformed or invalid run configuration."""
