"""Exception hierarchy shared across the package."""


class CarbonVolError(Exception):
    """Base class for all package errors."""


class IngestError(CarbonVolError):
    """Raised for unrecoverable problems while reading tick data."""


class EmptyDataError(IngestError):
    """No usable records survived parsing/filtering."""


class CalendarGapError(IngestError):
    """A trading day is covered by no contract in the roll calendar."""

    def __init__(self, dates):
        self.dates = list(dates)
        super().__init__(f"roll calendar covers no contract on: "
                         f"{', '.join(str(d) for d in self.dates)}")


class MeasureError(CarbonVolError):
    """Invalid input to a realized-measure computation."""


class DesignError(CarbonVolError):
    """Regression design could not be built (non-finite cells, rank loss)."""


class TargetingError(CarbonVolError):
    """Variance-targeting rule infeasible at the requested parameters."""


class EstimationError(CarbonVolError):
    """Indirect-inference estimation failed."""


class AdmissibilityError(CarbonVolError):
    """Risk premia push a mean-reversion speed to or below zero."""


class PricingError(CarbonVolError):
    """Characteristic function or Fourier pricing failure."""


class ConvergenceError(PricingError):
    """Fourier truncation/grid insufficient; widen the range or raise N."""


class BoundViolationError(PricingError):
    """Option price outside its no-arbitrage bounds."""


class PipelineError(CarbonVolError):
    """Stage orchestration failure (missing inputs, bad config)."""
