"""Exception types raised across the package."""

import numpy as np


class LqSweepError(Exception):
    """Base class for all errors raised by lq_sweep."""


class SingularMatrix(LqSweepError, np.linalg.LinAlgError):
    """A linear solve met a zero pivot or an estimated condition above the guard."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NonFiniteState(LqSweepError, FloatingPointError):
    """An integrated state left the finite range."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class NotHurwitz(LqSweepError, ValueError):
    pass


class OutOfRange(LqSweepError, ValueError):
    pass


class ParseError(LqSweepError, ValueError):
    pass


class ShapeError(LqSweepError, ValueError):
    pass


class PreconditionViolated(LqSweepError, ValueError):
    pass
