"""Risk-neutral mapping, characteristic function, and option pricing.

The exponential-affine pricing kernel carries one equity premium and one
variance premium per volatility factor.  Changing measure shifts each
factor's mean-reversion speed and long-run level (their product is
invariant), tilts the jump intensity, and shifts the jump-size mean; the
log-price characteristic function stays in closed form and vanilla options
follow by a Fourier-cosine series inversion with cumulant-based truncation.

Units: time in trading days and variances per day for the model and its
characteristic function; implied volatilities are annualized through the
calendar-day year fraction when quotes are involved.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .config import PricerConfig
from .errors import (AdmissibilityError, BoundViolationError, ConvergenceError,
                     PricingError)
from .simulate import StructuralParams, simulate_terminal


@dataclass(frozen=True)
class RiskPremia:
    """Equity premium and per-factor variance premia (dimensionless)."""

    phi: float = 0.0
    psi1: float = 0.0
    psi2: float = 0.0

    def as_array(self):
        return np.array([self.phi, self.psi1, self.psi2])

    def to_dict(self):
        return {"phi": self.phi, "psi1": self.psi1, "psi2": self.psi2}


@dataclass(frozen=True)
class RiskNeutralParams:
    """Pricing-measure parameters; rates are per day.

    The measure change scales each factor's speed and level in opposite
    directions, leaving their product invariant; that product is stored as
    ``drift_level`` (what the characteristic function actually consumes), so
    the invariance is exact rather than up to rounding.
    """

    kappa1: float
    kappa2: float
    drift_level1: float        # kappa1* x omega1* = kappa1 x omega1
    drift_level2: float
    lam1: float
    lam2: float
    rho1: float
    rho2: float
    jump_intensity: float
    jump_mean: float
    jump_std: float
    r: float = 0.0
    q: float = 0.0

    @property
    def omega1(self):
        return self.drift_level1 / self.kappa1

    @property
    def omega2(self):
        return self.drift_level2 / self.kappa2

    @property
    def jump_compensator(self):
        """E[e^{jump} - 1], the martingale drift adjustment per unit intensity."""
        return math.exp(self.jump_mean + 0.5 * self.jump_std ** 2) - 1.0

    def to_dict(self):
        from dataclasses import asdict
        return asdict(self)


def risk_neutralize(params, premia, r=0.0, q=0.0):
    """Map historical parameters to the pricing measure.

    Each factor's speed becomes kappa - phi rho lam - psi lam^2 and its level
    scales so that kappa* omega* = kappa omega; the jump intensity is tilted
    by E[e^{phi c}] and the jump-size mean shifts by phi sigma_J^2.
    """
    phi, psis = premia.phi, (premia.psi1, premia.psi2)
    kappas = (params.kappa1, params.kappa2)
    lams = (params.lam1, params.lam2)
    rhos = (params.rho1, params.rho2)
    kq = []
    for j in range(2):
        k_star = kappas[j] - phi * rhos[j] * lams[j] - psis[j] * lams[j] ** 2
        if k_star <= 0.0:
            raise AdmissibilityError(
                f"factor {j + 1}: kappa*={k_star:.3e} <= 0 at phi={phi:.4g}, "
                f"psi={psis[j]:.4g}")
        kq.append(k_star)
    lam_star = params.jump_intensity * math.exp(
        phi * params.jump_mean + 0.5 * phi ** 2 * params.jump_std ** 2)
    return RiskNeutralParams(
        kappa1=kq[0], kappa2=kq[1],
        drift_level1=params.kappa1 * params.omega,
        drift_level2=params.kappa2 * params.omega,
        lam1=params.lam1, lam2=params.lam2,
        rho1=params.rho1, rho2=params.rho2,
        jump_intensity=lam_star,
        jump_mean=params.jump_mean + phi * params.jump_std ** 2,
        jump_std=params.jump_std, r=r, q=q)


def _factor_terms(z, tau, kappa, drift_level, lam, rho):
    """A and B coefficients of one square-root factor.

    ``drift_level`` is kappa x omega.  Rotation-safe form: the principal
    square root keeps Re(d) >= 0, so exp(-d tau) decays and the complex
    logarithm never crosses a branch cut.
    """
    z = np.asarray(z, dtype=complex)
    if lam == 0.0:
        decay = -np.expm1(-kappa * tau)  # 1 - e^{-k tau}
        b = -0.5 * z * (1j + z) * decay / kappa
        a = -0.5 * z * (1j + z) * (drift_level / kappa) * (tau - decay / kappa)
        return a, b
    c = kappa - 1j * z * rho * lam
    d = np.sqrt(c * c + z * (1j + z) * lam ** 2)
    g = (c - d) / (c + d)
    edt = np.exp(-d * tau)
    b = (c - d) / lam ** 2 * (1.0 - edt) / (1.0 - g * edt)
    a = drift_level / lam ** 2 * (
        (c - d) * tau - 2.0 * np.log((1.0 - g * edt) / (1.0 - g)))
    return a, b


def log_char_fn(z, state, qp, tau):
    """Log characteristic function of the log futures price at t + tau.

    ``state`` is (x, v1, v2): current log price and the two variance states.
    ``z`` may be scalar or an array (complex allowed).
    """
    if tau <= 0:
        raise PricingError("tau must be positive")
    x, v1, v2 = state
    z = np.asarray(z, dtype=complex)
    a1, b1 = _factor_terms(z, tau, qp.kappa1, qp.drift_level1, qp.lam1,
                           qp.rho1)
    a2, b2 = _factor_terms(z, tau, qp.kappa2, qp.drift_level2, qp.lam2,
                           qp.rho2)
    theta = np.exp(1j * qp.jump_mean * z - 0.5 * qp.jump_std ** 2 * z * z)
    jump = qp.jump_intensity * tau * (theta - 1.0 - 1j * qp.jump_compensator * z)
    return 1j * (x + (qp.r - qp.q) * tau) * z + a1 + b1 * v1 + a2 + b2 * v2 + jump


def char_fn(z, state, qp, tau):
    """Characteristic function; raises on overflow at extreme arguments."""
    out = np.exp(log_char_fn(z, state, qp, tau))
    bad = ~np.isfinite(out)
    if np.any(bad):
        zbad = np.asarray(z, dtype=complex).ravel()[np.argmax(np.ravel(bad))]
        raise PricingError(f"characteristic function overflow at z={zbad}")
    return out


def _expected_iv(qp, v1, v2, tau):
    """Expected integrated variance of both factors over tau."""
    total = 0.0
    for kappa, omega, v0 in ((qp.kappa1, qp.omega1, v1),
                             (qp.kappa2, qp.omega2, v2)):
        decay = -math.expm1(-kappa * tau)
        total += omega * tau + (v0 - omega) * decay / kappa
    return total


def _degenerate_price(kind, strike, tau, state, qp):
    """Deterministic-forward limit when total variance is negligible.

    A cosine expansion cannot resolve a near-point mass; below a standard
    deviation of 1e-7 in log-return the payoff at the known terminal forward
    is exact to far better than price tolerance.
    """
    x, v1, v2 = state
    eiv = _expected_iv(qp, v1, v2, tau)
    lam_tau = qp.jump_intensity * tau
    c2 = eiv + lam_tau * (qp.jump_mean ** 2 + qp.jump_std ** 2)
    if c2 > 1e-14:
        return None
    xt = (x + (qp.r - qp.q) * tau - lam_tau * qp.jump_compensator
          - 0.5 * eiv + lam_tau * qp.jump_mean)
    forward_t = math.exp(xt)
    disc = math.exp(-qp.r * tau)
    payoff = (forward_t - strike) if kind == "call" else (strike - forward_t)
    return disc * max(payoff, 0.0)


def _cos_bounds(qp, state, tau, config, strike_log):
    """Truncation interval from first/second cumulant proxies."""
    x, v1, v2 = state
    eiv = _expected_iv(qp, v1, v2, tau)
    lam_tau = qp.jump_intensity * tau
    c1 = (x + (qp.r - qp.q) * tau - lam_tau * qp.jump_compensator
          - 0.5 * eiv + lam_tau * qp.jump_mean)
    c2 = eiv + lam_tau * (qp.jump_mean ** 2 + qp.jump_std ** 2)
    # vol-of-vol inflation keeps the interval honest when variance is noisy
    for kappa, omega, lam in ((qp.kappa1, qp.omega1, qp.lam1),
                              (qp.kappa2, qp.omega2, qp.lam2)):
        if kappa > 0:
            c2 += lam ** 2 * omega * tau / kappa ** 2
    half = max(config.cumulant_width * math.sqrt(max(c2, 0.0)),
               config.min_half_width)
    return c1 - half, c1 + half


def fourier_price(kind, strike, tau, state, qp, config=PricerConfig()):
    """European futures-option price by Fourier-cosine series inversion.

    The put is integrated directly (bounded payoff coefficients); the call
    follows from put-call parity on the discounted forward.  Raises
    ConvergenceError when the characteristic function has not decayed by the
    end of the grid.
    """
    if strike <= 0:
        raise PricingError("strike must be positive")
    if kind not in ("call", "put"):
        raise PricingError(f"kind must be 'call' or 'put', got {kind!r}")
    x = state[0]
    lk = math.log(strike)
    disc_limit = _degenerate_price(kind, strike, tau, state, qp)
    if disc_limit is not None:
        return disc_limit
    a, b = _cos_bounds(qp, state, tau, config, lk)
    disc = math.exp(-qp.r * tau)
    forward_t = math.exp(x + (qp.r - qp.q) * tau)
    if lk <= a:
        # strike below the support: put worthless (truncated mass < 1e-30)
        put = 0.0
        return put if kind == "put" else disc * (forward_t - strike)
    if lk >= b:
        # strike above the support: put at its parity-intrinsic value
        put = disc * (strike - forward_t)
        return put if kind == "put" else 0.0
    width = b - a
    n = config.n_grid
    k = np.arange(n)
    u = k * math.pi / width

    cf = np.exp(log_char_fn(u, state, qp, tau) - 1j * u * a)
    tail = np.max(np.abs(cf[-max(8, n // 64):]))
    if not np.isfinite(cf).all():
        raise PricingError("characteristic function overflow on the grid")
    if tail > config.tail_tol:
        raise ConvergenceError(
            f"CF tail mass {tail:.2e} above {config.tail_tol:.0e}; "
            "widen the truncation range or increase n_grid")

    # cosine coefficients of the put payoff (K - e^s)^+ on [a, lk]
    d = lk
    upk = u * (d - a)
    # chi: integral of e^s cos(u (s-a)); psi: integral of cos(u (s-a))
    denom = 1.0 + u * u
    chi = (np.cos(upk) * math.exp(d) - math.exp(a)
           + u * np.sin(upk) * math.exp(d)) / denom
    psi = np.empty(n)
    psi[0] = d - a
    psi[1:] = np.sin(upk[1:]) / u[1:]
    vk = 2.0 / width * (strike * psi - chi)
    terms = np.real(cf) * vk
    put = disc * (0.5 * terms[0] + np.sum(terms[1:]))
    put = max(put, 0.0)
    if kind == "put":
        return put
    return put + disc * (forward_t - strike)


def black76_price(kind, forward, strike, tau, r, sigma):
    """Futures-option price under a lognormal forward with volatility sigma.

    ``sigma`` and ``tau`` must share a time unit (annual/years or
    daily/days); ``r`` is continuously compounded per the same unit.
    """
    if forward <= 0 or strike <= 0 or tau <= 0:
        raise PricingError("forward, strike and tau must be positive")
    if kind not in ("call", "put"):
        raise PricingError(f"kind must be 'call' or 'put', got {kind!r}")
    disc = math.exp(-r * tau)
    if sigma <= 0:
        intrinsic = forward - strike if kind == "call" else strike - forward
        return disc * max(intrinsic, 0.0)
    srt = sigma * math.sqrt(tau)
    d1 = (math.log(forward / strike) + 0.5 * sigma ** 2 * tau) / srt
    d2 = d1 - srt
    if kind == "call":
        return disc * (forward * ndtr(d1) - strike * ndtr(d2))
    return disc * (strike * ndtr(-d2) - forward * ndtr(-d1))


def black76_vega(forward, strike, tau, r, sigma):
    srt = sigma * math.sqrt(tau)
    d1 = (math.log(forward / strike) + 0.5 * sigma ** 2 * tau) / srt
    density = math.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)
    return math.exp(-r * tau) * forward * density * math.sqrt(tau)


def implied_vol(price, kind, forward, strike, tau, r=0.0,
                config=PricerConfig()):
    """Invert the futures-option formula for volatility.

    Safeguarded Newton with a bisection fallback; the price must lie
    strictly inside its no-arbitrage bounds.
    """
    disc = math.exp(-r * tau)
    intrinsic = disc * max((forward - strike) if kind == "call"
                           else (strike - forward), 0.0)
    upper = disc * (forward if kind == "call" else strike)
    if not intrinsic < price < upper:
        raise BoundViolationError(
            f"{kind} price {price:.6g} outside ({intrinsic:.6g}, {upper:.6g})")
    lo, hi = config.iv_bracket
    tol = config.iv_tol * forward
    f_lo = black76_price(kind, forward, strike, tau, r, lo) - price
    f_hi = black76_price(kind, forward, strike, tau, r, hi) - price
    if f_lo > 0 or f_hi < 0:
        raise BoundViolationError(
            f"no volatility in [{lo}, {hi}] matches price {price:.6g}")
    sigma = 0.5 * (lo + hi)
    for _ in range(config.iv_max_iter):
        diff = black76_price(kind, forward, strike, tau, r, sigma) - price
        if abs(diff) < tol:
            return sigma
        if diff > 0:
            hi = sigma
        else:
            lo = sigma
        vega = black76_vega(forward, strike, tau, r, sigma)
        if vega > 1e-14:
            step = sigma - diff / vega
            sigma = step if lo < step < hi else 0.5 * (lo + hi)
        else:
            sigma = 0.5 * (lo + hi)
    return sigma


@dataclass(frozen=True)
class OptionQuote:
    """One market quote; ``tau_days`` in trading-model days."""

    kind: str
    strike: float
    forward: float
    tau_days: float
    price: float = np.nan
    market_iv: float = np.nan
    date: object = None

    def __post_init__(self):
        if self.kind not in ("call", "put"):
            raise ValueError("kind must be 'call' or 'put'")
        if self.tau_days <= 0:
            raise ValueError("tau_days must be positive")

    @property
    def moneyness(self):
        return self.strike / self.forward

    def tau_years(self, days_per_year=365.0):
        return self.tau_days / days_per_year


def model_iv(quote, qp, state, config=PricerConfig()):
    """Annualized implied volatility of the model price of one quote.

    Prices too close to the no-arbitrage bounds are nudged inside before
    inversion so deep out-of-the-money quotes keep a finite volatility.
    """
    price = fourier_price(quote.kind, quote.strike, quote.tau_days, state, qp,
                          config)
    tau_y = quote.tau_years(config.days_per_year)
    r_y = qp.r * config.days_per_year
    disc = math.exp(-r_y * tau_y)
    intrinsic = disc * max((quote.forward - quote.strike)
                           if quote.kind == "call"
                           else (quote.strike - quote.forward), 0.0)
    upper = disc * (quote.forward if quote.kind == "call" else quote.strike)
    eps = 1e-12 * quote.forward
    price = min(max(price, intrinsic + eps), upper - eps)
    return implied_vol(price, quote.kind, quote.forward, quote.strike, tau_y,
                       r_y, config)


def market_iv(quote, config=PricerConfig()):
    """Annualized implied volatility of the quoted market price."""
    if np.isfinite(quote.market_iv):
        return quote.market_iv
    return implied_vol(quote.price, quote.kind, quote.forward, quote.strike,
                       quote.tau_years(config.days_per_year), 0.0, config)


def _variance_states(quotes, states):
    out = []
    for quote in quotes:
        state = states[quote.date] if isinstance(states, dict) else states
        out.append((math.log(quote.forward), state[0], state[1]))
    return out


def iv_objective(premia, quotes, params, states, r=0.0, q=0.0,
                 config=PricerConfig()):
    """Root of summed squared IV gaps between model and market.

    ``states`` maps a quote's date to its (v1, v2) variance state, or is one
    (v1, v2) pair for all quotes.  Inadmissible premia raise.
    """
    qp = risk_neutralize(params, premia, r, q)
    full_states = _variance_states(quotes, states)
    total = 0.0
    for quote, st in zip(quotes, full_states):
        gap = model_iv(quote, qp, st, config) - market_iv(quote, config)
        total += gap * gap
    return math.sqrt(total)


def calibrate_premia(quotes, params, states, r=0.0, q=0.0,
                     config=PricerConfig(), calib=None):
    """Fit (phi, psi1, psi2) to quotes by derivative-free multistart search.

    Inadmissible points are rejected (infinite objective), never clamped.
    Returns (RiskPremia, objective at the optimum).
    """
    from scipy.optimize import minimize
    from .config import CalibrateConfig
    calib = calib or CalibrateConfig()
    if len(quotes) < 3:
        raise PricingError("need at least 3 quotes to calibrate 3 premia")

    def objective(vec):
        try:
            return iv_objective(RiskPremia(*vec), quotes, params, states,
                                r, q, config)
        except AdmissibilityError:
            return np.inf
        except BoundViolationError:
            return np.inf

    lo_phi, hi_phi = calib.phi_range
    lo_psi, hi_psi = calib.psi_range
    rng = np.random.Generator(np.random.Philox(key=np.array([17, 0],
                                                            dtype=np.uint64)))
    starts = [np.zeros(3)]
    while len(starts) < calib.n_starts:
        cand = np.array([rng.uniform(lo_phi, hi_phi),
                         rng.uniform(lo_psi, hi_psi),
                         rng.uniform(lo_psi, hi_psi)])
        if np.isfinite(objective(cand)):
            starts.append(cand)
    if not any(np.isfinite(objective(s)) for s in starts):
        raise AdmissibilityError("every calibration start is inadmissible")

    best = None
    for start in starts:
        res = minimize(objective, start, method="Nelder-Mead",
                       options={"maxfev": calib.max_iterations * 3,
                                "xatol": calib.xatol, "fatol": calib.fatol})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise AdmissibilityError("calibration failed to find an admissible point")
    # polish the winner from its own optimum
    res = minimize(objective, best.x, method="Nelder-Mead",
                   options={"maxfev": calib.max_iterations * 3,
                            "xatol": calib.xatol * 0.1,
                            "fatol": calib.fatol * 0.1})
    if res.fun <= best.fun:
        best = res
    return RiskPremia(*best.x), float(best.fun)


def monte_carlo_price(kind, strikes, tau_days_list, state, qp, n_paths,
                      seed, substeps_per_day=24):
    """Euler Monte Carlo prices for a strike/maturity grid, with errors.

    Independent of the Fourier route: simulates the risk-neutral dynamics
    directly (full-truncation Euler) and discounts sample payoffs.  Returns
    ``{(tau_days, strike): (price, std_error)}``.
    """
    x, v1, v2 = state
    taus = sorted(set(float(t) for t in tau_days_list))
    dt = 1.0 / substeps_per_day
    checkpoints = [int(round(t * substeps_per_day)) for t in taus]
    if any(c <= 0 for c in checkpoints):
        raise PricingError("maturities must be at least one substep long")
    n_steps = checkpoints[-1]
    mu0 = (qp.r - qp.q) - qp.jump_intensity * qp.jump_compensator
    params_tuple = (qp.kappa1, qp.omega1, qp.lam1, qp.rho1,
                    qp.kappa2, qp.omega2, qp.lam2, qp.rho2,
                    qp.jump_intensity, qp.jump_mean, qp.jump_std)
    xt = simulate_terminal(params_tuple, mu0, True, dt, n_steps,
                           checkpoints, v1, v2, n_paths, seed)
    out = {}
    for j, tau in enumerate(taus):
        forward_t = math.exp(x) * np.exp(xt[:, j])
        disc = math.exp(-qp.r * tau)
        for strike in strikes:
            if kind == "call":
                payoff = np.maximum(forward_t - strike, 0.0)
            else:
                payoff = np.maximum(strike - forward_t, 0.0)
            out[(tau, float(strike))] = (
                disc * float(payoff.mean()),
                disc * float(payoff.std(ddof=1)) / math.sqrt(n_paths))
    return out


def moneyness_buckets(m):
    """Masks and labels for m < 0.85, 0.85 <= m <= 1.1, m > 1.1."""
    m = np.asarray(m, dtype=float)
    return (("m < 0.85", m < 0.85),
            ("0.85 <= m <= 1.1", (m >= 0.85) & (m <= 1.1)),
            ("m > 1.1", m > 1.1))


def maturity_buckets(tau_days):
    """Masks and labels for tau <= 50, (50, 90], (90, 160], > 160 days."""
    t = np.asarray(tau_days, dtype=float)
    return (("tau <= 50", t <= 50.0),
            ("50 < tau <= 90", (t > 50.0) & (t <= 90.0)),
            ("90 < tau <= 160", (t > 90.0) & (t <= 160.0)),
            ("tau > 160", t > 160.0))


def rmse_iv(quotes, premia, params, states, r=0.0, q=0.0,
            config=PricerConfig(), by="moneyness"):
    """Bucketed implied-volatility RMSE, x100.

    Empty buckets are omitted from the result rather than reported as zero.
    """
    qp = risk_neutralize(params, premia, r, q)
    full_states = _variance_states(quotes, states)
    gaps = np.array([model_iv(qu, qp, st, config) - market_iv(qu, config)
                     for qu, st in zip(quotes, full_states)])
    if by == "moneyness":
        buckets = moneyness_buckets([q_.moneyness for q_ in quotes])
    elif by == "maturity":
        buckets = maturity_buckets([q_.tau_days for q_ in quotes])
    else:
        raise ValueError("by must be 'moneyness' or 'maturity'")
    out = {}
    for label, mask in buckets:
        if mask.any():
            out[label] = {"rmse_iv": float(np.sqrt(np.mean(gaps[mask] ** 2)) * 100.0),
                          "count": int(mask.sum())}
    return out


def rmse_iv_cross(quotes, premia, params, states, r=0.0, q=0.0,
                  config=PricerConfig()):
    """Moneyness x maturity RMSE table (x100); empty cells omitted."""
    qp = risk_neutralize(params, premia, r, q)
    full_states = _variance_states(quotes, states)
    gaps = np.array([model_iv(qu, qp, st, config) - market_iv(qu, config)
                     for qu, st in zip(quotes, full_states)])
    mb = moneyness_buckets([q_.moneyness for q_ in quotes])
    tb = maturity_buckets([q_.tau_days for q_ in quotes])
    out = {}
    for mlabel, mmask in mb:
        row = {}
        for tlabel, tmask in tb:
            mask = mmask & tmask
            if mask.any():
                row[tlabel] = {"rmse_iv": float(np.sqrt(np.mean(gaps[mask] ** 2)) * 100.0),
                               "count": int(mask.sum())}
        if row:
            out[mlabel] = row
    return out
