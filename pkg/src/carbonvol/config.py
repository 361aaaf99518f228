"""Configuration dataclasses for every pipeline stage.

All stochastic stages take their seed from one global pipeline seed so a run
is reproducible end to end.  Units convention: time in trading days,
variances per day in natural (non-percentage) units unless a function says
otherwise; the daily-percentage convention (returns x100, variances x100^2)
is applied only where regression variables are built.
"""

from dataclasses import dataclass, field, asdict
from datetime import time
from pathlib import Path

import yaml

PERCENT_RETURN = 100.0
PERCENT_VARIANCE = PERCENT_RETURN ** 2
TRADING_DAYS_PER_YEAR = 252
CALENDAR_DAYS_PER_YEAR = 365.0


@dataclass(frozen=True)
class SessionSpec:
    """Trading session and bar width; default gives 120 five-minute bars."""

    open_time: time = time(7, 0)
    close_time: time = time(17, 0)
    bar_minutes: int = 5

    @property
    def bars_per_day(self):
        span = (self.close_time.hour * 60 + self.close_time.minute
                - self.open_time.hour * 60 - self.open_time.minute)
        if span <= 0 or span % self.bar_minutes:
            raise ValueError("session length must be a positive multiple of bar width")
        return span // self.bar_minutes

    @classmethod
    def parse(cls, text, bar_minutes=5):
        """Parse 'HH:MM-HH:MM' into a SessionSpec."""
        lo, hi = text.split("-")
        h1, m1 = (int(x) for x in lo.split(":"))
        h2, m2 = (int(x) for x in hi.split(":"))
        return cls(time(h1, m1), time(h2, m2), bar_minutes)


@dataclass(frozen=True)
class ThresholdConfig:
    """Settings for the jump test and local-variance thresholding.

    ``c_tau`` scales the trimming threshold, ``c_theta`` enters the corrected
    estimators' replacement value; the test significance is ``alpha``.  The
    local-variance smoother uses a Gaussian kernel of scale ``lv_bandwidth``
    intervals truncated at ``lv_window`` on each side, never sees the
    ``lv_exclude`` nearest returns, and runs ``lv_passes`` trimmed passes.
    """

    c_tau: float = 3.0
    c_theta: float = 3.0
    alpha: float = 0.001
    lv_bandwidth: int = 25
    lv_window: int = 50
    lv_exclude: int = 1
    lv_passes: int = 2
    min_var: float = 1e-12
    max_jump_iterations: int = 20
    clean_multiplier: float = 5.0
    clean_window: int = 45
    # 'finite-sample' calibrates the rejection quantile on the scale-free
    # constant-volatility null (the statistic over-rejects in the far tail
    # at m=120 under the asymptotic normal quantile); 'asymptotic' uses the
    # standard normal quantile as printed.
    critical_value: str = "finite-sample"

    def __post_init__(self):
        if self.c_tau <= 0:
            raise ValueError("c_tau must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.critical_value not in ("finite-sample", "asymptotic"):
            raise ValueError("critical_value must be 'finite-sample' or 'asymptotic'")

    def null_key(self, n):
        """Tuple of everything the null distribution of the statistic depends on."""
        return (n, self.c_tau, self.c_theta, self.lv_bandwidth,
                self.lv_window, self.lv_exclude, self.lv_passes)


@dataclass(frozen=True)
class SimConfig:
    """Simulation grid: replicas of n_days x intervals, Euler substeps."""

    n_days: int = 1283
    intervals_per_day: int = 120
    substeps: int = 1
    n_replicas: int = 1
    seed: int = 0
    burn_in_days: int = 126
    v1_init: float | None = None
    v2_init: float | None = None

    def __post_init__(self):
        if self.substeps < 1 or self.n_replicas < 1 or self.n_days < 1:
            raise ValueError("substeps, n_replicas and n_days must be >= 1")

    @property
    def dt(self):
        return 1.0 / (self.intervals_per_day * self.substeps)


@dataclass(frozen=True)
class PricerConfig:
    """Fourier grid and implied-vol solver settings."""

    n_grid: int = 4096
    cumulant_width: float = 12.0
    min_half_width: float = 1e-5
    tail_tol: float = 1e-8
    iv_tol: float = 1e-10
    iv_max_iter: int = 100
    iv_bracket: tuple = (1e-6, 10.0)
    days_per_year: float = CALENDAR_DAYS_PER_YEAR

    def __post_init__(self):
        if self.n_grid & (self.n_grid - 1):
            raise ValueError("n_grid must be a power of two")
        if self.iv_tol <= 0:
            raise ValueError("iv_tol must be positive")


@dataclass(frozen=True)
class EstimateConfig:
    """Indirect-inference sizing knobs."""

    n_replicas: int = 50
    replica_days: int | None = None     # None: match the data sample length
    substeps: int = 1
    burn_in_days: int = 126
    max_iterations: int = 400
    n_restarts: int = 1
    fd_rel_step: float = 1e-3
    xatol: float = 1e-5
    fatol: float = 1e-7


@dataclass(frozen=True)
class CalibrateConfig:
    """Risk-premia calibration knobs."""

    n_starts: int = 8
    max_iterations: int = 300
    xatol: float = 1e-9
    fatol: float = 1e-12
    phi_range: tuple = (-0.05, 0.05)
    psi_range: tuple = (-0.05, 0.05)


@dataclass
class PipelineConfig:
    """Paths plus per-stage settings for the batch pipeline."""

    ticks: str = ""
    calendar: str = ""
    quotes: str = ""
    out_dir: str = "runs/latest"
    seed: int = 42
    session: str = "07:00-17:00"
    bar_minutes: int = 5
    model: str = "2svj"
    har_models: tuple = ("har", "lhar", "lhar-cj", "ar22")
    oos_from: str = ""
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    estimate: EstimateConfig = field(default_factory=EstimateConfig)
    pricer: PricerConfig = field(default_factory=PricerConfig)
    calibrate: CalibrateConfig = field(default_factory=CalibrateConfig)

    @classmethod
    def from_file(cls, path):
        raw = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw):
        kwargs = dict(raw)
        for key, sub in (("threshold", ThresholdConfig),
                         ("estimate", EstimateConfig),
                         ("pricer", PricerConfig),
                         ("calibrate", CalibrateConfig)):
            if key in kwargs and isinstance(kwargs[key], dict):
                sub_kwargs = dict(kwargs[key])
                for name in ("iv_bracket", "phi_range", "psi_range", "har_models"):
                    if name in sub_kwargs and isinstance(sub_kwargs[name], list):
                        sub_kwargs[name] = tuple(sub_kwargs[name])
                kwargs[key] = sub(**sub_kwargs)
        if isinstance(kwargs.get("har_models"), list):
            kwargs["har_models"] = tuple(kwargs["har_models"])
        return cls(**kwargs)

    def to_dict(self):
        return asdict(self)

    def validate(self, require=()):
        """Check referenced input files exist for the requested stages."""
        missing = []
        for name in require:
            value = getattr(self, name)
            if not value:
                missing.append(f"{name} not set")
            elif not Path(value).exists() and "*" not in value:
                missing.append(f"{name}: {value} does not exist")
        if missing:
            raise FileNotFoundError("; ".join(missing))
