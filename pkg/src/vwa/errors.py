"""Exception types raised by the estimator, resampling and interval routines."""

from __future__ import annotations


class VWAError(Exception):
    """Base class for all package errors."""


class DomainError(VWAError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateNeighborhoodError(VWAError, ArithmeticError):
    """All kernel weights vanished, so the weighted average is undefined.

    ``current`` is the observation whose neighborhood degenerated and
    ``index`` the deleted neighbor (jackknife) when applicable.
    """

    def __init__(self, message: str, current: float | None = None, index: int | None = None):
        super().__init__(message)
        self.current = current
        self.index = index


class DegenerateScaleError(VWAError, ArithmeticError):
    """The first-stage variance scale is zero or could not be computed."""


class ResamplingDegeneracyError(VWAError, ArithmeticError):
    """Too few bootstrap replications had a positive weight sum."""

    def __init__(self, message: str, dropped: int = 0):
        super().__init__(message)
        self.dropped = dropped


class InsufficientDataError(VWAError):
    """A sample source ran dry before the required number of observations.

    The partially filled :class:`~vwa.intervals.TwoStageRun` is attached as
    ``partial``.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
