"""Carbon futures volatility estimation and option pricing toolkit.

Pipeline: tick ingestion -> realized measures with jump separation -> HAR
volatility regressions -> indirect inference of two-factor square-root
volatility with price jumps -> risk-neutral mapping through a three-premium
pricing kernel -> Fourier option pricing and premia calibration.
"""

__version__ = "0.1.0"

from .backend import BACKEND  # noqa: F401
