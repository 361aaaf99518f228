"""HAR-family volatility regressions and their evaluation.

Fits HAR / LHAR / LHAR-CJ / AR(22) specifications on the aggregate panel by
OLS with Newey-West (Bartlett kernel) covariance, producing the coefficient
vectors used both as forecasting benchmarks and as auxiliary statistics for
indirect inference.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DesignError
from .measures import AggregatePanel

VALID_KINDS = ("har", "lhar", "lhar-cj", "ar22")
TERM_HORIZONS = {"d": 1, "w": 5, "m": 22}


@dataclass(frozen=True)
class HarSpec:
    """Which regression to run.

    ``response``/``volatility`` select the total-variance or continuous
    series for the left and right side; the printed family equations use the
    total variance as response and (for the jump-separated model) the
    continuous part as regressor.  ``terms`` restricts the aggregation
    horizons, e.g. ("d", "w") for the reduced auxiliary model.
    """

    kind: str = "har"
    h: int = 1
    leverage: str = "negative"
    terms: tuple = ("d", "w", "m")
    response: str = ""
    volatility: str = ""

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"kind must be one of {VALID_KINDS}")
        if self.leverage not in ("negative", "positive"):
            raise ValueError("leverage must be 'negative' or 'positive'")
        if self.h < 1:
            raise ValueError("h must be >= 1")
        bad = [t for t in self.terms if t not in TERM_HORIZONS]
        if bad or not self.terms:
            raise ValueError(f"terms must be a non-empty subset of d/w/m, got {self.terms}")
        if not self.response:
            object.__setattr__(self, "response", "vhat")
        if not self.volatility:
            object.__setattr__(self, "volatility",
                               "chat" if self.kind == "lhar-cj" else "vhat")
        for f in (self.response, self.volatility):
            if f not in ("vhat", "chat"):
                raise ValueError("response/volatility must be 'vhat' or 'chat'")

    @property
    def has_leverage(self):
        return self.kind in ("lhar", "lhar-cj")

    @property
    def has_jumps(self):
        return self.kind == "lhar-cj"


def _log_cols(panel, which):
    if which == "vhat":
        return panel.log_v, panel.log_v5, panel.log_v22
    return panel.log_c, panel.log_c5, panel.log_c22


def _forward_response(panel, spec):
    """log V^(h) at t+h: mean of the h daily logs ending at t+h."""
    base = _log_cols(panel, spec.response)[0]
    h = spec.h
    n = base.size
    resp = np.full(n, np.nan)
    if h == 1:
        resp[:-1] = base[1:]
        return resp
    fw = np.convolve(base, np.ones(h) / h, mode="valid")  # mean over [t, t+h-1]
    resp[: n - h] = fw[1:]
    return resp


def build_design(panel, spec):
    """Response vector, regressor matrix and column names for one spec.

    Regressors at row t use information dated <= t only; rows lacking a full
    trailing history or a future response are dropped.
    """
    if not isinstance(panel, AggregatePanel):
        raise TypeError("panel must be an AggregatePanel")
    y = _forward_response(panel, spec)
    names = ["c"]
    n = len(panel)
    cols = [np.ones(n)]

    if spec.kind == "ar22":
        base = _log_cols(panel, spec.volatility)[0]
        for lag in range(22):
            col = np.full(n, np.nan)
            col[lag:] = base[: n - lag] if lag else base
            cols.append(col)
            names.append(f"phi{lag + 1}")
    else:
        logs = dict(zip("dwm", _log_cols(panel, spec.volatility)))
        for t in spec.terms:
            cols.append(logs[t])
            names.append(f"beta_{t}")
        if spec.has_leverage:
            if spec.leverage == "negative":
                lev = dict(zip("dwm", (panel.rneg, panel.r5neg, panel.r22neg)))
            else:
                lev = dict(zip("dwm", (np.maximum(panel.r, 0.0),
                                       np.maximum(panel.r5, 0.0),
                                       np.maximum(panel.r22, 0.0))))
            for t in spec.terms:
                cols.append(lev[t])
                names.append(f"gamma_{t}")
        if spec.has_jumps:
            jumps = dict(zip("dwm", (panel.j, panel.j5, panel.j22)))
            for t in spec.terms:
                cols.append(np.log1p(jumps[t]))
                names.append(f"alpha_{t}")

    X = np.column_stack(cols)
    rows = panel.valid & np.isfinite(y) & np.all(np.isfinite(X), axis=1)
    if spec.kind == "ar22":
        rows &= np.arange(n) >= 21
    bad = panel.valid & ~np.all(np.isfinite(X), axis=1)
    if bad.any():
        t = int(np.argmax(bad))
        col = names[int(np.argmax(~np.isfinite(X[t])))]
        raise DesignError(f"non-finite regressor at date {panel.dates[t]}, "
                          f"column {col}")
    return y[rows], X[rows], names, panel.dates[rows]


def newey_west_lag(n):
    """Automatic Bartlett truncation: floor(4 (n/100)^(2/9))."""
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


@dataclass
class AuxiliaryFit:
    """OLS result with HAC covariance."""

    names: list
    coef: np.ndarray
    cov: np.ndarray
    resid_var: float
    nobs: int
    lag: int

    @property
    def se(self):
        return np.sqrt(np.diag(self.cov))

    @property
    def tstats(self):
        return self.coef / self.se

    def to_dict(self):
        return {"names": list(self.names),
                "coef": self.coef.tolist(),
                "cov": self.cov.tolist(),
                "resid_var": self.resid_var,
                "nobs": self.nobs,
                "lag": self.lag}

    @classmethod
    def from_dict(cls, d):
        return cls(names=list(d["names"]), coef=np.asarray(d["coef"]),
                   cov=np.asarray(d["cov"]), resid_var=float(d["resid_var"]),
                   nobs=int(d["nobs"]), lag=int(d["lag"]))


def ols_newey_west(X, y, lag=None):
    """OLS point estimates with Bartlett-kernel HAC covariance.

    ``lag=0`` reduces to the heteroskedasticity-only (White) covariance.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n <= k:
        raise DesignError(f"{n} observations for {k} regressors")
    rank = np.linalg.matrix_rank(X)
    if rank < k:
        rdiag = np.abs(np.diag(np.linalg.qr(X, mode="r")))
        cols = [i for i, d in enumerate(rdiag) if d < 1e-10 * rdiag.max()]
        raise DesignError(f"rank-deficient design (rank {rank} < {k}); "
                          f"suspect columns {cols}")
    if lag is None:
        lag = newey_west_lag(n)

    xtx = X.T @ X
    coef = np.linalg.solve(xtx, X.T @ y)
    resid = y - X @ coef
    dof = n - k
    resid_var = float(resid @ resid / dof)

    xu = X * resid[:, None]
    s = xu.T @ xu
    for j in range(1, lag + 1):
        w = 1.0 - j / (lag + 1.0)
        gamma = xu[j:].T @ xu[:-j]
        s += w * (gamma + gamma.T)
    xtx_inv = np.linalg.inv(xtx)
    cov = xtx_inv @ s @ xtx_inv
    cov = 0.5 * (cov + cov.T)
    return AuxiliaryFit(names=None, coef=coef, cov=cov, resid_var=resid_var,
                        nobs=n, lag=lag)


def fit(panel, spec, lag=None):
    """Build the design for ``spec`` and fit it."""
    y, X, names, dates = build_design(panel, spec)
    out = ols_newey_west(X, y, lag=lag)
    out.names = names
    return out


@dataclass
class FitMetrics:
    """In- and out-of-sample evaluation numbers."""

    aic: float = np.nan
    bic: float = np.nan
    adj_r2: float = np.nan
    mse: float = np.nan
    mae: float = np.nan
    qlike: float = np.nan
    mz_r2: float = np.nan
    n_oos: int = 0
    degenerate: bool = False

    def to_dict(self):
        return {k: (v if not isinstance(v, (np.floating, np.integer)) else float(v))
                for k, v in self.__dict__.items()}


def in_sample_metrics(fit_result, X, y):
    """AIC/BIC on the n log(RSS/n) + penalty convention, adjusted R^2.

    Additive constants make the levels convention dependent; only orderings
    across models on the same sample are comparable.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    resid = y - X @ fit_result.coef
    rss = float(resid @ resid)
    degenerate = rss < n * np.finfo(float).eps
    rss = max(rss, n * np.finfo(float).eps)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else np.nan
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k) if tss > 0 else np.nan
    return FitMetrics(aic=n * math.log(rss / n) + 2 * k,
                      bic=n * math.log(rss / n) + k * math.log(n),
                      adj_r2=adj, degenerate=degenerate)


def qlike(y, h):
    """Forecast loss y/h - ln(y/h) - 1; zero iff the forecast is exact."""
    ratio = np.asarray(y, dtype=float) / np.asarray(h, dtype=float)
    return ratio - np.log(ratio) - 1.0


def forecast_oos(panel, spec, split_date, lag=None, smearing=True):
    """One-day-ahead expanding-window forecasts of the variance level.

    For each test date the model is re-fit on all rows whose response is
    dated strictly earlier, the log forecast is mapped to a level with the
    lognormal half-variance correction (``smearing``), and losses are
    accumulated against the realized level.
    """
    y, X, names, dates = build_design(panel, spec)
    level = dict(zip(panel.dates, panel.v_level
                     if spec.response == "vhat" else panel.c_level))
    date_index = {d: i for i, d in enumerate(panel.dates)}
    split = np.datetime64(split_date) if isinstance(split_date, str) else split_date

    # row t of the design predicts the response dated h days after dates[t]
    target_dates = np.array([panel.dates[min(date_index[d] + spec.h,
                                             len(panel) - 1)] for d in dates])
    is_test = target_dates >= split
    test_rows = np.where(is_test)[0]
    if test_rows.size == 0:
        raise DesignError(f"no test rows at or after {split_date}")
    if test_rows[0] < 60:
        raise DesignError("need at least 60 training rows before the split")

    preds = np.empty(test_rows.size)
    reals = np.empty(test_rows.size)
    for i, t in enumerate(test_rows):
        # lstsq tolerates degenerate (e.g. constant-series) training windows
        coef, rss, rank_t, _ = np.linalg.lstsq(X[:t], y[:t], rcond=None)
        resid = y[:t] - X[:t] @ coef
        resid_var = float(resid @ resid) / max(t - rank_t, 1)
        log_pred = float(X[t] @ coef)
        if smearing:
            log_pred += 0.5 * resid_var
        preds[i] = math.exp(log_pred)
        reals[i] = level[target_dates[t]]

    err = reals - preds
    tss = float(np.sum((reals - reals.mean()) ** 2))
    if np.std(preds) < 1e-14 * max(1.0, abs(preds.mean())) or tss == 0.0:
        mz_r2 = 1.0 if np.allclose(reals, preds) else np.nan
    else:
        mz = np.polyfit(preds, reals, 1)
        mz_resid = reals - np.polyval(mz, preds)
        mz_r2 = 1.0 - float(mz_resid @ mz_resid) / tss
    return FitMetrics(mse=float(np.mean(err ** 2)),
                      mae=float(np.mean(np.abs(err))),
                      qlike=float(np.mean(qlike(reals, preds))),
                      mz_r2=mz_r2, n_oos=test_rows.size)
