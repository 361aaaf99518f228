"""Per-day realized measures: variance, jump detection, and aggregates.

The daily grid of intraday log-returns is reduced to realized variance, a
continuous/jump split driven by a studentized threshold-bipower statistic,
intraday jump counts and sizes from iterative removal of the largest return,
and the h-day aggregates used by the volatility regressions.

Conventions: one trading day is the time unit, delta = 1/m with m the grid
size.  All estimators that target integrated variance carry their
absolute-moment normalization (pi/2 for bipower) so the statistic is
asymptotically standard normal on jump-free days.
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc, ndtr, ndtri

from .backend import kernels
from .config import (PERCENT_RETURN, PERCENT_VARIANCE, ThresholdConfig)
from .errors import MeasureError

# variance constant of the studentized statistic's limit law
CTZ_VARIANCE_CONST = math.pi ** 2 / 4.0 + math.pi - 5.0

BIPOWER_EXPONENTS = (1.0, 1.0)
TRIPOWER_EXPONENTS = (4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0)


@lru_cache(maxsize=None)
def abs_moment(gamma):
    """E|Z|^gamma for standard normal Z: 2^(g/2) Gamma((g+1)/2) / sqrt(pi)."""
    return 2.0 ** (gamma / 2.0) * gamma_fn((gamma + 1.0) / 2.0) / math.sqrt(math.pi)


def upper_incomplete_gamma(a, x):
    """Unnormalized upper incomplete gamma integral."""
    return gammaincc(a, x) * gamma_fn(a)


@lru_cache(maxsize=None)
def truncation_replacement_const(gamma, c_theta):
    """Coefficient of threshold^(gamma/2) replacing a truncated term.

    Equals the conditional expectation of |x|^gamma given the exceedance,
    for a Gaussian return whose threshold is c_theta^2 times its variance.
    """
    c2 = c_theta * c_theta
    return float(upper_incomplete_gamma((gamma + 1.0) / 2.0, c2 / 2.0)
                 * (2.0 / c2) ** (gamma / 2.0)
                 / (2.0 * ndtr(-c_theta) * math.sqrt(math.pi)))


@lru_cache(maxsize=None)
def trim_correction(c_tau):
    """E[Z^2 | |Z| <= c] for standard normal Z; undoes trimming bias."""
    tail = float(ndtr(-c_tau))
    density = math.exp(-0.5 * c_tau * c_tau) / math.sqrt(2.0 * math.pi)
    keep = 1.0 - 2.0 * tail
    kept_mass = 1.0 - 2.0 * c_tau * density - 2.0 * tail
    return kept_mass / keep


@lru_cache(maxsize=None)
def rejection_quantile(alpha):
    """Upper-tail standard normal quantile for the jump test."""
    return float(ndtri(1.0 - alpha))


# --- finite-sample null calibration -------------------------------------
#
# The statistic is scale-free, so under constant volatility its null law
# depends only on the grid size and the threshold-config constants.  The
# asymptotic normal quantile over-rejects in the far tail at m = 120 (the
# statistic is right-skewed in finite samples); the default critical value
# is therefore read from a quantile table simulated once on the pivotal
# null.  The table for the default config ships with the package; other
# configs are calibrated on first use and memoized.

_NULL_TAILS = np.logspace(np.log10(0.05), np.log10(2e-4), 28)
_NULL_TABLE_DAYS = 600_000
_NULL_TABLE_SEED = 20260809
_null_quantile_cache = {}


def _null_table_path():
    from pathlib import Path
    return Path(__file__).parent / "_data" / "ctz_null_quantiles.json"


@lru_cache(maxsize=1)
def _packaged_null_tables():
    import json
    path = _null_table_path()
    if not path.exists():
        return {}
    raw = json.loads(path.read_text())
    return {tuple(entry["key"]): (np.array(entry["tails"]), np.array(entry["quantiles"]))
            for entry in raw["tables"]}


def simulate_null_statistics(n, n_days, seed, config):
    """Statistic draws under the constant-volatility null (unit scale)."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0],
                                                            dtype=np.uint64)))
    out = np.empty(n_days)
    chunk = 4096
    done = 0
    while done < n_days:
        take = min(chunk, n_days - done)
        days = rng.standard_normal((take, n))
        for i in range(take):
            out[done + i] = ctz_statistic(days[i], config)
        done += take
    return out


def _calibrate_null_quantiles(n, config, n_days=_NULL_TABLE_DAYS,
                              seed=_NULL_TABLE_SEED):
    stats = simulate_null_statistics(n, n_days, seed, config)
    return _NULL_TAILS.copy(), np.quantile(stats, 1.0 - _NULL_TAILS)


def null_quantile(alpha, n, config):
    """Critical value of the jump statistic at upper-tail mass ``alpha``.

    Finite-sample mode interpolates the calibrated table in
    (log tail mass, quantile) space; tail masses outside the table fall
    back to the asymptotic quantile.
    """
    if config.critical_value == "asymptotic":
        return rejection_quantile(alpha)
    key = config.null_key(n)
    if key not in _null_quantile_cache:
        tables = _packaged_null_tables()
        if key in tables:
            _null_quantile_cache[key] = tables[key]
        else:
            import warnings
            warnings.warn(f"no packaged null table for {key}; calibrating "
                          "(one-time, slow)", RuntimeWarning, stacklevel=2)
            _null_quantile_cache[key] = _calibrate_null_quantiles(n, config)
    tails, quants = _null_quantile_cache[key]
    if alpha < tails[-1] or alpha > tails[0]:
        return rejection_quantile(alpha)
    return float(np.interp(np.log(alpha), np.log(tails[::-1]), quants[::-1]))


def realized_variance(returns):
    """Sum of squared intraday returns."""
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        raise MeasureError("empty return grid")
    return float(np.sum(r * r))


def multipower(returns, exponents, normalize=True, delta=None):
    """Multipower variation with grid-size prefactor delta^(1 - sum(g)/2).

    With exponents (1, 1) and ``normalize`` this is bipower variation,
    scaled by pi/2 to estimate integrated variance.
    """
    r = np.asarray(returns, dtype=float)
    exponents = tuple(float(g) for g in exponents)
    if any(g <= 0 for g in exponents):
        raise MeasureError("exponents must be positive")
    if r.size < len(exponents):
        raise MeasureError(f"grid of length {r.size} shorter than "
                           f"{len(exponents)} exponents")
    if delta is None:
        delta = 1.0 / r.size
    prefactor = delta ** (1.0 - 0.5 * sum(exponents))
    mu_norm = 1.0
    if normalize:
        for g in exponents:
            mu_norm /= abs_moment(g)
    thr = np.full(r.size, np.inf)
    zc = tuple(0.0 for _ in exponents)
    return kernels.tmpv_day(np.ascontiguousarray(r), thr, exponents, zc,
                            prefactor, mu_norm, False)


def local_variance(returns, config=ThresholdConfig()):
    """Per-interval variance estimate by the iterated trimmed smoother."""
    r = np.ascontiguousarray(returns, dtype=float)
    w = np.array(_smoother_weights(config))
    return kernels.local_variance_day(
        r, w, config.c_tau ** 2, config.lv_passes,
        trim_correction(config.c_tau), config.min_var)


@lru_cache(maxsize=None)
def _smoother_weights(config):
    idx = np.arange(-config.lv_window, config.lv_window + 1)
    w = np.exp(-0.5 * (idx / config.lv_bandwidth) ** 2)
    w[np.abs(idx) <= config.lv_exclude] = 0.0
    w.setflags(write=False)
    return w


def thresholds(returns, config=ThresholdConfig()):
    """Trimming thresholds: c_tau^2 times the local variance estimate."""
    return config.c_tau ** 2 * local_variance(returns, config)


def threshold_multipower(returns, exponents, thresholds, corrected=False,
                         c_theta=3.0, normalize=True, delta=None):
    """(Corrected) threshold multipower variation.

    Uncorrected: terms whose squared return exceeds the threshold are
    dropped.  Corrected: they are replaced by the Gaussian conditional
    expectation surrogate, removing the finite-sample downward bias.
    """
    r = np.asarray(returns, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    if np.any(thr <= 0):
        raise MeasureError("thresholds must be positive")
    exponents = tuple(float(g) for g in exponents)
    if r.size < len(exponents):
        raise MeasureError(f"grid of length {r.size} shorter than "
                           f"{len(exponents)} exponents")
    if delta is None:
        delta = 1.0 / r.size
    prefactor = delta ** (1.0 - 0.5 * sum(exponents))
    mu_norm = 1.0
    if normalize:
        for g in exponents:
            mu_norm /= abs_moment(g)
    zc = tuple(truncation_replacement_const(g, c_theta) if corrected else 0.0
               for g in exponents)
    return kernels.tmpv_day(np.ascontiguousarray(r), np.ascontiguousarray(thr),
                            exponents, zc, prefactor, mu_norm, corrected)


def _ctz_parts(returns, config):
    """All statistic ingredients in one pass over the day."""
    r = np.ascontiguousarray(returns, dtype=float)
    rv = float(np.sum(r * r))
    if rv <= 0.0:
        return rv, 0.0, 0.0, 0.0, 0.0
    n = r.size
    thr = thresholds(r, config)
    # small-sample factors: an M-power sum has n-M+1 terms for n returns
    fac2 = n / (n - 1.0)
    fac3 = n / (n - 2.0)
    tbpv = fac2 * threshold_multipower(r, BIPOWER_EXPONENTS, thr,
                                       corrected=False)
    ctbpv = fac2 * threshold_multipower(r, BIPOWER_EXPONENTS, thr,
                                        corrected=True, c_theta=config.c_theta)
    cttripv = fac3 * threshold_multipower(r, TRIPOWER_EXPONENTS, thr,
                                          corrected=True, c_theta=config.c_theta)
    delta = 1.0 / r.size
    if ctbpv > 0.0:
        quarticity_ratio = max(1.0, cttripv / (ctbpv * ctbpv))
    else:
        quarticity_ratio = 1.0
    stat = ((rv - ctbpv) / rv) / math.sqrt(CTZ_VARIANCE_CONST * quarticity_ratio)
    stat /= math.sqrt(delta)
    return rv, tbpv, ctbpv, cttripv, stat


def ctz_statistic(returns, config=ThresholdConfig()):
    """Studentized jump statistic; asymptotically N(0,1) on jump-free days."""
    return _ctz_parts(returns, config)[4]


@dataclass
class DayMeasures:
    """Realized quantities of one trading day (natural units)."""

    date: object
    rv: float
    c: float
    j: float
    ctz: float
    n_jumps: int
    jump_sizes: np.ndarray
    r: float
    r_adj: float
    capped: bool = False

    @property
    def vhat(self):
        return self.c + self.j


def decompose_day(returns, config=ThresholdConfig(), date=None, r_daily=np.nan):
    """Split a day into continuous and jump variance via the jump test.

    On non-rejected days the whole realized variance is continuous; on
    rejected days the continuous part is the (uncorrected) threshold bipower
    variation and the jump part is clamped at zero from below.  Rejection
    also triggers intraday jump extraction.
    """
    r = np.asarray(returns, dtype=float)
    rv, tbpv, ctbpv, cttripv, stat = _ctz_parts(r, config)
    quantile = null_quantile(config.alpha, r.size, config)
    if stat > quantile:
        c_hat = tbpv
        j_hat = max(rv - tbpv, 0.0)
        sizes, capped = _extract_jumps(r, config, quantile, first_stat=stat)
        ssq = float(np.sum(sizes ** 2))
        if ssq > 0.0:
            sizes = sizes * math.sqrt(j_hat / ssq)
        else:
            sizes = np.zeros_like(sizes)
        r_adj = r_daily - float(np.sum(sizes))
        return DayMeasures(date, rv, c_hat, j_hat, stat, sizes.size, sizes,
                           r_daily, r_adj, capped)
    return DayMeasures(date, rv, rv, 0.0, stat, 0, np.empty(0), r_daily,
                       r_daily, False)


def _extract_jumps(returns, config, quantile, first_stat=None):
    """Iteratively remove the largest return until the test stops rejecting."""
    work = np.array(returns, dtype=float)
    sizes = []
    stat = first_stat if first_stat is not None else ctz_statistic(work, config)
    capped = False
    while stat > quantile:
        if len(sizes) >= config.max_jump_iterations:
            capped = True
            break
        idx = int(np.argmax(np.abs(work)))
        sizes.append(work[idx])
        work[idx] = (np.sum(work) - work[idx]) / (work.size - 1)
        stat = ctz_statistic(work, config)
    return np.asarray(sizes), capped


def extract_intraday_jumps(returns, config=ThresholdConfig(), r_daily=np.nan):
    """Jump count, sizes consistent with the day's jump variance, adjusted return."""
    dm = decompose_day(returns, config, r_daily=r_daily)
    return dm.n_jumps, dm.jump_sizes, dm.r_adj


@dataclass
class MeasuresPanel:
    """Daily realized measures over the sample."""

    dates: np.ndarray
    rv: np.ndarray
    c: np.ndarray
    j: np.ndarray
    ctz: np.ndarray
    n_jumps: np.ndarray
    jump_sizes: list
    r: np.ndarray
    r_adj: np.ndarray
    capped: np.ndarray
    cleaned: np.ndarray = None
    rescale_k: float = 1.0

    def __post_init__(self):
        if self.cleaned is None:
            self.cleaned = np.zeros(len(self.dates), dtype=bool)

    @property
    def vhat(self):
        return self.c + self.j

    def __len__(self):
        return len(self.dates)

    def to_frame(self):
        return pd.DataFrame({
            "date": self.dates,
            "RV": self.rv,
            "C": self.c,
            "J": self.j,
            "ctz": self.ctz,
            "n_jumps": self.n_jumps,
            "jump_sizes": [";".join(f"{s:.10e}" for s in sz)
                           for sz in self.jump_sizes],
            "r": self.r,
            "r_adj": self.r_adj,
            "capped": self.capped.astype(int),
            "cleaned": self.cleaned.astype(int),
        })

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path):
        df = pd.read_csv(path, parse_dates=["date"])
        sizes = [np.array([float(x) for x in str(s).split(";") if x and x != "nan"])
                 for s in df["jump_sizes"].fillna("")]
        return cls(dates=df["date"].to_numpy(),
                   rv=df["RV"].to_numpy(float),
                   c=df["C"].to_numpy(float),
                   j=df["J"].to_numpy(float),
                   ctz=df["ctz"].to_numpy(float),
                   n_jumps=df["n_jumps"].to_numpy(int),
                   jump_sizes=sizes,
                   r=df["r"].to_numpy(float),
                   r_adj=df["r_adj"].to_numpy(float),
                   capped=df["capped"].to_numpy(bool)
                   if "capped" in df else np.zeros(len(df), bool),
                   cleaned=df["cleaned"].to_numpy(bool)
                   if "cleaned" in df else np.zeros(len(df), bool))


def measure_panel(returns, r_daily, dates=None, config=ThresholdConfig(),
                  full=True):
    """Per-day measures over a (n_days, m) grid of intraday returns.

    ``full=False`` skips the jump test and books everything as continuous;
    valid shortcut when the generating process is known jump-free (used by
    the indirect-inference replicas of no-jump models).
    """
    ret = np.asarray(returns, dtype=float)
    if ret.ndim != 2:
        raise MeasureError("returns must be (n_days, m)")
    n_days = ret.shape[0]
    r_daily = np.asarray(r_daily, dtype=float)
    if dates is None:
        dates = np.arange(n_days)
    if not full:
        rv = np.sum(ret * ret, axis=1)
        return MeasuresPanel(
            dates=np.asarray(dates), rv=rv, c=rv.copy(),
            j=np.zeros(n_days), ctz=np.zeros(n_days),
            n_jumps=np.zeros(n_days, dtype=int),
            jump_sizes=[np.empty(0)] * n_days,
            r=r_daily, r_adj=r_daily.copy(),
            capped=np.zeros(n_days, dtype=bool))
    days = [decompose_day(ret[i], config, date=dates[i], r_daily=r_daily[i])
            for i in range(n_days)]
    return MeasuresPanel(
        dates=np.asarray(dates),
        rv=np.array([d.rv for d in days]),
        c=np.array([d.c for d in days]),
        j=np.array([d.j for d in days]),
        ctz=np.array([d.ctz for d in days]),
        n_jumps=np.array([d.n_jumps for d in days], dtype=int),
        jump_sizes=[d.jump_sizes for d in days],
        r=r_daily,
        r_adj=np.array([d.r_adj for d in days]),
        capped=np.array([d.capped for d in days], dtype=bool))


def rescale_to_close(panel):
    """Scale all variance columns so mean variance matches mean squared return.

    One global factor; the continuous/jump split and jump-size consistency
    (sum of squared sizes = jump variance) are preserved.  Returns and
    adjusted returns are left untouched.
    """
    mask = np.isfinite(panel.r)
    if not mask.any():
        raise MeasureError("no usable daily returns for rescaling")
    denom = float(np.mean(panel.vhat[mask]))
    if denom <= 0.0:
        raise MeasureError("mean realized variance is zero; cannot rescale")
    k = float(np.mean(panel.r[mask] ** 2)) / denom
    return replace(
        panel,
        rv=panel.rv * k, c=panel.c * k, j=panel.j * k,
        jump_sizes=[s * math.sqrt(k) for s in panel.jump_sizes],
        rescale_k=panel.rescale_k * k)


def clean_continuous(panel, config=ThresholdConfig()):
    """Replace upward spikes of the continuous series by a trailing median.

    A day is replaced when its continuous variance exceeds ``clean_multiplier``
    times the median of the prior ``clean_window`` days.  Returns the cleaned
    panel and the number of replacements.
    """
    c = panel.c.copy()
    flags = np.zeros(len(panel), dtype=bool)
    for t in range(len(panel)):
        lo = max(0, t - config.clean_window)
        if t - lo < 5:
            continue
        med = float(np.median(c[lo:t]))
        if med > 0.0 and c[t] > config.clean_multiplier * med:
            c[t] = med
            flags[t] = True
    return replace(panel, c=c, cleaned=flags), int(flags.sum())


@dataclass
class AggregatePanel:
    """Daily panel with 1/5/22-day aggregates in regression units.

    Log-variance aggregates are trailing means of logs, return aggregates
    trailing means, jump aggregates trailing sums; negative return parts are
    taken after averaging.  ``valid`` marks rows with full trailing history.
    """

    dates: np.ndarray
    v_level: np.ndarray
    c_level: np.ndarray
    log_v: np.ndarray
    log_v5: np.ndarray
    log_v22: np.ndarray
    log_c: np.ndarray
    log_c5: np.ndarray
    log_c22: np.ndarray
    r: np.ndarray
    r5: np.ndarray
    r22: np.ndarray
    rneg: np.ndarray
    r5neg: np.ndarray
    r22neg: np.ndarray
    j: np.ndarray
    j5: np.ndarray
    j22: np.ndarray
    valid: np.ndarray
    percentage: bool = True

    def __len__(self):
        return len(self.dates)


def aggregate(panel, horizons=(1, 5, 22), percentage=True, log_floor=1e-12,
              use_adjusted_returns=False):
    """Build the aggregate panel from daily measures.

    ``percentage`` applies the daily-percentage convention (returns x100,
    variances x100^2) before taking logs; jump aggregates stay in levels and
    enter regressions through log(1 + J).
    """
    horizons = tuple(sorted(horizons))
    if horizons != (1, 5, 22):
        raise MeasureError("aggregation horizons are fixed at (1, 5, 22)")
    if len(panel) <= 22:
        raise MeasureError("panel too short: need more than 22 days")
    var_scale = PERCENT_VARIANCE if percentage else 1.0
    ret_scale = PERCENT_RETURN if percentage else 1.0
    v = panel.vhat * var_scale
    c = panel.c * var_scale
    j = panel.j * var_scale
    r = (panel.r_adj if use_adjusted_returns else panel.r) * ret_scale

    log_v = np.log(np.maximum(v, log_floor))
    log_c = np.log(np.maximum(c, log_floor))

    def tmean(x, h):
        return pd.Series(x).rolling(h).mean().to_numpy()

    def tsum(x, h):
        return pd.Series(x).rolling(h).sum().to_numpy()

    r5 = tmean(r, 5)
    r22 = tmean(r, 22)
    out = AggregatePanel(
        dates=panel.dates,
        v_level=v, c_level=c,
        log_v=log_v, log_v5=tmean(log_v, 5), log_v22=tmean(log_v, 22),
        log_c=log_c, log_c5=tmean(log_c, 5), log_c22=tmean(log_c, 22),
        r=r, r5=r5, r22=r22,
        rneg=np.minimum(r, 0.0), r5neg=np.minimum(r5, 0.0),
        r22neg=np.minimum(r22, 0.0),
        j=j, j5=tsum(j, 5), j22=tsum(j, 22),
        valid=np.zeros(len(panel), dtype=bool),
        percentage=percentage)
    cols = (out.log_v22, out.log_c22, out.r22, out.j22)
    finite = np.ones(len(panel), dtype=bool)
    for col in cols:
        finite &= np.isfinite(col)
    out.valid = finite
    return out
