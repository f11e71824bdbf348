"""Exception types raised by the library."""


class MinkowskiError(Exception):
    """Base class for all library errors."""


class NotProper(MinkowskiError):
    """A set is not a proper C-polytope (unbounded, or origin not interior)."""


class DimensionMismatch(MinkowskiError, ValueError):
    pass


class Infeasible(MinkowskiError):
    pass


class NonConvergence(MinkowskiError):
    """Iteration cap reached before the fixed-point tolerance was met."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


class NotStabilizing(MinkowskiError):
    """The pair (A, B) or the feedback A + BK is not strictly stable."""


class CertificationFailed(MinkowskiError):
    pass


class BudgetExceeded(MinkowskiError):
    pass
