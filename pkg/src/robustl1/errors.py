"""Exception hierarchy shared across the package."""


class RobustL1Error(Exception):
    """Base class for all package errors."""


class DimensionError(RobustL1Error, ValueError):
    """Array shapes are inconsistent with each other."""


class RankDeficientError(RobustL1Error):
    """A matrix that must have full row rank does not (singular-value ratio test)."""


class CapExceededError(RobustL1Error):
    """An exact enumeration was requested beyond its configured size cap."""


class NotOptimalError(RobustL1Error):
    """A uniqueness check was requested for a point that fails the optimality test."""


class CoherenceUndefinedError(RobustL1Error):
    """The annihilator has a zero column, so mutual coherence is undefined."""

    def __init__(self, index):
        super().__init__(f"column {index} of I - X'(XX')^-1 X is zero; coherence undefined")
        self.index = index
