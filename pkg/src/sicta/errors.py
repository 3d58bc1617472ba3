"""Exception hierarchy shared by every module."""


class SictaError(Exception):
    """Base class for all library errors."""


class RejectedDistribution(SictaError, ValueError):
    pass


class InvalidOccupancy(SictaError, ValueError):
    pass


class TruncationTooTight(SictaError):
    pass


class PrecisionExhausted(SictaError):
    pass


class DegenerateDistribution(SictaError, ValueError):
    pass


class TailBoundTooLarge(SictaError):
    pass


class PoleOfGamma(SictaError, ValueError):
    pass


class UnstableSystem(SictaError):
    pass


class NoConvergence(SictaError):
    """Raised when an optimizer hits its iteration cap.

    The best iterate found so far is attached as ``best`` (and its objective
    value as ``value``) so callers can still inspect it.
    """

    def __init__(self, message, best=None, value=None):
        super().__init__(message)
        self.best = best
        self.value = value


class InfeasibleConstraint(SictaError):
    pass


class TermBlowup(SictaError):
    pass


class NotStationary(SictaError):
    pass


class NonConvergent(SictaError):
    pass


class SeriesNotConverged(SictaError):
    pass
