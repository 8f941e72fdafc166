"""Exception and warning types shared across the pipeline."""

from __future__ import annotations


class GorddError(Exception):
    """Base class for all data and estimation errors raised by this package."""


class SgfParseError(GorddError):
    """Malformed SGF input. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


class RecordError(GorddError):
    """A parsed SGF tree is missing or carries unusable game metadata."""


class RatingError(GorddError):
    """Unparseable rank text or invalid rating data."""


class ChartError(GorddError):
    """A rating chart cannot be rendered or digitized."""


class EstimationError(GorddError):
    """An estimator refuses to run (insufficient or degenerate data)."""


class SingularDesignError(EstimationError):
    """Weighted design matrix is rank deficient within tolerance."""


class SeparationError(EstimationError):
    """Logistic likelihood is unbounded (complete separation)."""


class SimulationError(GorddError):
    """Invalid simulation configuration or generation failure."""


class RatingWindowWarning(UserWarning):
    """A rating series spans more days than charts ever cover."""


class EstimationWarning(UserWarning):
    """A requested estimate was skipped or degraded."""
