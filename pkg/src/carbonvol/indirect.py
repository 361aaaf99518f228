"""Indirect inference: match auxiliary regression coefficients between data
and simulated replicas of the structural volatility model.

Variance targeting pins the long-run level (half the mean continuous
variance), the second vol-of-vol loading (stationary-variance identity,
re-evaluated lazily at each candidate point), and the jump parameters
(observed intraday jump counts and sizes), leaving a low-dimensional search
under common random numbers.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .config import EstimateConfig, SimConfig, ThresholdConfig
from .errors import EstimationError, TargetingError
from .har import HarSpec, build_design, fit, ols_newey_west
from .measures import aggregate, measure_panel
from .simulate import SimOutput, StructuralParams, simulate

FREE_PARAMS = {
    "2sv": ("kappa1", "kappa2", "lam1"),
    "2svj": ("kappa1", "kappa2", "lam1", "rho1", "rho2"),
}

DEFAULT_BOUNDS = {
    "kappa1": (1e-4, 10.0),
    "kappa2": (1e-4, 10.0),
    "lam1": (1e-5, 0.2),
    "rho1": (-0.999, 0.999),
    "rho2": (-0.999, 0.999),
}

DEFAULT_START = {"kappa1": 0.1, "kappa2": 1.5, "lam1": 0.01,
                 "rho1": -0.3, "rho2": -0.1}


def aux_spec_for(model):
    """Auxiliary regression per structural model.

    The no-jump model uses the plain three-horizon regression on the
    continuous series; the jump model uses the reduced leverage regression
    keeping only the daily and weekly terms.
    """
    if model == "2sv":
        return HarSpec(kind="har", response="chat", volatility="chat")
    if model == "2svj":
        return HarSpec(kind="lhar", terms=("d", "w"),
                       response="chat", volatility="chat")
    raise ValueError(f"model must be '2sv' or '2svj', got {model!r}")


@dataclass(frozen=True)
class TargetingInfo:
    """Data-side moments feeding the targeting rules (natural units)."""

    mean_chat: float
    var_chat: float
    jump_rate: float = 0.0
    jump_mean: float = 0.0
    jump_std: float = 0.0


def targeting_info(panel):
    """Collect targeting moments from a treated measures panel."""
    chat = panel.c
    sizes = (np.concatenate([s for s in panel.jump_sizes if s.size])
             if any(s.size for s in panel.jump_sizes) else np.empty(0))
    return TargetingInfo(
        mean_chat=float(np.mean(chat)),
        var_chat=float(np.var(chat)),
        jump_rate=float(np.mean(panel.n_jumps)),
        jump_mean=float(np.mean(sizes)) if sizes.size else 0.0,
        jump_std=float(np.std(sizes, ddof=1)) if sizes.size > 1 else 0.0)


def target_omega(info):
    """Half the mean of the continuous variance (two factors share it)."""
    return 0.5 * info.mean_chat


def integration_smoothing(kappa):
    """Variance shrinkage of a mean-reverting factor under daily integration.

    The daily integral of a stationary square-root factor has variance
    2 (kappa - 1 + e^-kappa)/kappa^2 times the spot variance; 1 in the slow
    limit, 2/kappa for very fast factors.
    """
    if kappa < 1e-6:
        return 1.0 - kappa / 3.0
    return 2.0 * (kappa - 1.0 + math.exp(-kappa)) / kappa ** 2


def target_lambda2(kappa1, kappa2, lam1, info, printed_variant=False,
                   integration_adjust=True):
    """Second vol-of-vol from the stationary-variance identity.

    Equates the sample variance of the daily continuous series with the
    model variance of daily integrated variance,
    omega (f(k1) lam1^2/(2 k1) + f(k2) lam2^2/(2 k2)); the smoothing factors
    f are dropped when ``integration_adjust`` is false, recovering the plain
    spot-variance identity.  ``printed_variant`` uses lam1/kappa1 instead of
    lam1^2/kappa1 inside the radicand (dimensionally inconsistent; kept only
    for comparison).
    """
    omega = target_omega(info)
    if omega <= 0:
        raise TargetingError("mean continuous variance must be positive")
    first = (lam1 / kappa1) if printed_variant else (lam1 ** 2 / kappa1)
    f1 = integration_smoothing(kappa1) if integration_adjust else 1.0
    f2 = integration_smoothing(kappa2) if integration_adjust else 1.0
    radicand = kappa2 * (2.0 * info.var_chat / omega - f1 * first) / f2
    if radicand < 0.0:
        raise TargetingError(
            f"negative radicand {radicand:.3e} at kappa1={kappa1:.4g}, "
            f"kappa2={kappa2:.4g}, lam1={lam1:.4g}")
    return math.sqrt(radicand)


def target(panel, model):
    """Targeted parameter subset for ``model`` from a treated panel."""
    info = targeting_info(panel)
    out = {"omega": target_omega(info)}
    if model == "2svj":
        out.update(jump_intensity=info.jump_rate,
                   jump_mean=info.jump_mean,
                   jump_std=info.jump_std)
    return out, info


@dataclass
class IIProblem:
    """Everything one structural estimation needs.

    The matched statistic vector holds the auxiliary coefficients and, when
    ``match_resid_var`` (requires the stacked covariance), the auxiliary
    residual variance, which sharpens the vol-of-vol/mean-reversion split.
    """

    model: str
    data_fit: object               # AuxiliaryFit on the data
    info: TargetingInfo
    n_days: int                    # replica sample length
    seed: int = 0
    est: EstimateConfig = field(default_factory=EstimateConfig)
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    measurement: str = ""          # 'full' or 'rv'; default by model
    bounds: dict = field(default_factory=dict)
    start: dict = field(default_factory=dict)
    weight: np.ndarray = None
    match_resid_var: bool = True
    printed_lambda2: bool = False
    integration_adjust: bool = True
    intervals_per_day: int = 120
    moment_cov: np.ndarray = None  # joint cov of (stats, mean C, var C)

    def __post_init__(self):
        if self.model not in FREE_PARAMS:
            raise ValueError(f"unknown model {self.model!r}")
        if not self.measurement:
            # replicas of a no-jump model need no jump test
            self.measurement = "rv" if self.model == "2sv" else "full"
        if self.moment_cov is None and self.weight is None:
            # covariance of the residual-variance statistic unavailable
            self.match_resid_var = False
        if self.weight is None:
            if self.match_resid_var:
                self.weight = np.linalg.inv(
                    self.moment_cov[:self.n_stats, :self.n_stats])
            else:
                self.weight = np.linalg.inv(self.data_fit.cov)
        if self.n_stats < len(self.free_names):
            raise EstimationError(
                f"{self.n_stats} auxiliary statistics cannot identify "
                f"{len(self.free_names)} free parameters")

    @property
    def n_stats(self):
        return len(self.data_fit.coef) + (1 if self.match_resid_var else 0)

    @property
    def stat_names(self):
        names = list(self.data_fit.names or
                     [f"b{i}" for i in range(len(self.data_fit.coef))])
        if self.match_resid_var:
            names.append("resid_var")
        return names

    @property
    def data_stats(self):
        if self.match_resid_var:
            return statistic_vector(self.data_fit)
        return self.data_fit.coef

    @property
    def free_names(self):
        return FREE_PARAMS[self.model]

    @property
    def aux_spec(self):
        return aux_spec_for(self.model)

    def bound(self, name):
        return self.bounds.get(name, DEFAULT_BOUNDS[name])

    def initial_point(self):
        point = np.array([self.start.get(n, DEFAULT_START[n])
                          for n in self.free_names])
        # pull lam1 inside the targeting-feasible region if needed
        i_k1 = self.free_names.index("kappa1")
        i_l1 = self.free_names.index("lam1")
        omega = target_omega(self.info)
        f1 = (integration_smoothing(point[i_k1])
              if self.integration_adjust else 1.0)
        cap_sq = 0.5 * (2.0 * self.info.var_chat / omega) * point[i_k1] / f1
        if cap_sq > 0 and "lam1" not in self.start:
            point[i_l1] = min(point[i_l1], math.sqrt(cap_sq))
        return point

    def params_at(self, theta):
        """Structural parameters at a free-parameter vector (targeting applied)."""
        free = dict(zip(self.free_names, np.asarray(theta, dtype=float)))
        return self.params_from(free, self.info)

    def params_from(self, free, info):
        """Structural parameters from free values and targeting moments."""
        lam2 = target_lambda2(free["kappa1"], free["kappa2"], free["lam1"],
                              info, self.printed_lambda2,
                              self.integration_adjust)
        kwargs = dict(omega=target_omega(info), lam2=lam2,
                      drift_mode="zero", **free)
        if self.model == "2svj":
            kwargs.update(jump_intensity=info.jump_rate,
                          jump_mean=info.jump_mean,
                          jump_std=info.jump_std)
        return StructuralParams(**kwargs)


def _replica_sim_config(problem):
    return SimConfig(n_days=problem.n_days,
                     intervals_per_day=problem.intervals_per_day,
                     substeps=problem.est.substeps,
                     n_replicas=problem.est.n_replicas,
                     seed=problem.seed,
                     burn_in_days=problem.est.burn_in_days)


def _replica_noise(problem):
    """Per-replica draws, cached: identical across parameter evaluations."""
    cached = getattr(problem, "_noise", None)
    if cached is None:
        from .simulate import draw_replica_noise
        config = _replica_sim_config(problem)
        n_steps = ((config.burn_in_days + config.n_days)
                   * config.intervals_per_day * config.substeps)
        cached = [draw_replica_noise(problem.seed, rep, n_steps)
                  for rep in range(problem.est.n_replicas)]
        problem._noise = cached
    return cached


def replica_statistics(params, problem):
    """Matched statistic vector of every simulated replica at ``params``."""
    sim = simulate(params, _replica_sim_config(problem),
                   noise=_replica_noise(problem))
    spec = problem.aux_spec
    stats = []
    for rep in range(sim.n_replicas):
        panel = measure_panel(sim.returns[rep], sim.daily_returns[rep],
                              config=problem.threshold,
                              full=(problem.measurement == "full"))
        agg = aggregate(panel, percentage=True)
        y, X, names, _ = build_design(agg, spec)
        rfit = ols_newey_west(X, y, lag=problem.data_fit.lag)
        if problem.match_resid_var:
            stats.append(statistic_vector(rfit))
        else:
            stats.append(rfit.coef)
    return np.array(stats)


def binding_mean(theta, problem, info=None):
    """Mean matched statistics across replicas at a free-parameter point."""
    free = dict(zip(problem.free_names, np.asarray(theta, dtype=float)))
    params = problem.params_from(free, info or problem.info)
    return replica_statistics(params, problem).mean(axis=0)


def chi_square(theta, problem):
    """Weighted squared distance between data and simulated statistics.

    Deterministic given (theta, problem.seed): replicas reuse fixed
    counter-based streams, so the optimization is a deterministic problem.
    """
    d = problem.data_stats - binding_mean(theta, problem)
    return float(d @ problem.weight @ d)


@dataclass
class IIResult:
    """Structural estimate with asymptotic errors and implied coefficients."""

    model: str
    params: StructuralParams
    theta: np.ndarray
    se: np.ndarray
    free_names: tuple
    chi2: float
    aux_names: list
    data_coef: np.ndarray
    implied_coef: np.ndarray
    implied_resid_var: float
    data_resid_var: float
    targeted: dict
    n_evals: int
    converged: bool
    trace: list = field(default_factory=list)

    def to_dict(self):
        return {
            "model": self.model,
            "params": self.params.to_dict(),
            "theta": self.theta.tolist(),
            "se": self.se.tolist(),
            "free_names": list(self.free_names),
            "chi2": self.chi2,
            "aux_names": list(self.aux_names),
            "data_coef": self.data_coef.tolist(),
            "implied_coef": self.implied_coef.tolist(),
            "implied_resid_var": self.implied_resid_var,
            "data_resid_var": self.data_resid_var,
            "targeted": self.targeted,
            "n_evals": self.n_evals,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(model=d["model"],
                   params=StructuralParams.from_dict(d["params"]),
                   theta=np.asarray(d["theta"]), se=np.asarray(d["se"]),
                   free_names=tuple(d["free_names"]), chi2=float(d["chi2"]),
                   aux_names=list(d["aux_names"]),
                   data_coef=np.asarray(d["data_coef"]),
                   implied_coef=np.asarray(d["implied_coef"]),
                   implied_resid_var=float(d["implied_resid_var"]),
                   data_resid_var=float(d["data_resid_var"]),
                   targeted=dict(d["targeted"]),
                   n_evals=int(d["n_evals"]), converged=bool(d["converged"]))


def estimate(problem):
    """Minimize the coefficient distance by bounded simplex search with restarts."""
    trace = []

    def objective(theta):
        try:
            value = chi_square(theta, problem)
        except (TargetingError, ValueError):
            value = np.inf
        trace.append((np.array(theta), value))
        return value

    bounds = [problem.bound(n) for n in problem.free_names]
    x0 = problem.initial_point()
    if not np.isfinite(objective(x0)):
        raise EstimationError(f"infeasible starting point {x0}")

    best = None
    point = x0
    for _ in range(1 + problem.est.n_restarts):
        res = minimize(objective, point, method="Nelder-Mead", bounds=bounds,
                       options={"maxfev": problem.est.max_iterations,
                                "xatol": problem.est.xatol,
                                "fatol": problem.est.fatol,
                                "adaptive": len(point) > 3})
        if best is None or res.fun < best.fun:
            best = res
        point = best.x
    theta = np.asarray(best.x, dtype=float)
    converged = bool(best.success)

    params = problem.params_at(theta)
    replica = replica_statistics(params, problem)
    implied = replica.mean(axis=0)
    d = problem.data_stats - implied
    chi2 = float(d @ problem.weight @ d)
    se = standard_errors(theta, problem)

    targeted = {"omega": params.omega, "lam2": params.lam2}
    if problem.model == "2svj":
        targeted.update(jump_intensity=params.jump_intensity,
                        jump_mean=params.jump_mean,
                        jump_std=params.jump_std)

    k = len(problem.data_fit.coef)
    if problem.match_resid_var:
        implied_rv = float(implied[k])
        implied_coef = implied[:k]
    else:
        implied_rv = float("nan")
        implied_coef = implied
    return IIResult(model=problem.model, params=params, theta=theta, se=se,
                    free_names=problem.free_names, chi2=chi2,
                    aux_names=list(problem.data_fit.names or []),
                    data_coef=problem.data_fit.coef,
                    implied_coef=implied_coef,
                    implied_resid_var=implied_rv,
                    data_resid_var=problem.data_fit.resid_var,
                    targeted=targeted, n_evals=len(trace),
                    converged=converged, trace=trace)


def _binding_jacobian(theta, problem):
    """Central-difference Jacobian of the binding function in theta."""
    theta = np.asarray(theta, dtype=float)
    cols = []
    for i in range(theta.size):
        step = problem.est.fd_rel_step * max(abs(theta[i]), 1e-8)
        up = theta.copy()
        dn = theta.copy()
        up[i] += step
        dn[i] -= step
        try:
            g_up = binding_mean(up, problem)
            g_dn = binding_mean(dn, problem)
        except TargetingError:
            g_up = binding_mean(theta, problem)
            g_dn = g_up
            step = np.inf  # derivative unavailable along this direction
        cols.append((g_up - g_dn) / (2.0 * step))
    return np.column_stack(cols)


def _moment_jacobian(theta, problem):
    """Sensitivity of the binding function to the targeting moments."""
    from dataclasses import replace as dreplace
    info = problem.info
    cols = []
    for name in ("mean_chat", "var_chat"):
        base = getattr(info, name)
        step = 1e-3 * abs(base)
        try:
            g_up = binding_mean(theta, problem,
                                dreplace(info, **{name: base + step}))
            g_dn = binding_mean(theta, problem,
                                dreplace(info, **{name: base - step}))
            cols.append((g_up - g_dn) / (2.0 * step))
        except TargetingError:
            cols.append(np.zeros(problem.n_stats))
    return np.column_stack(cols)


def standard_errors(theta, problem):
    """Sandwich errors with a numerically differentiated binding function.

    With the joint covariance of (coefficients, targeting moments) available
    the error propagates both sampling noise sources plus simulation noise:

        Cov(theta) = A [C_bb - G C_mb - C_bm G' + G C_mm G' + C_sim] A',
        A = (J' Omega J)^{-1} J' Omega.

    Without it, the classic (1 + 1/S) (J' Omega J)^{-1} formula applies
    (targeting moments treated as known).
    """
    theta = np.asarray(theta, dtype=float)
    jac = _binding_jacobian(theta, problem)
    omega = problem.weight
    s = problem.est.n_replicas
    try:
        bread = np.linalg.inv(jac.T @ omega @ jac)
    except np.linalg.LinAlgError:
        raise EstimationError("singular Jacobian in standard-error formula")
    if problem.moment_cov is None:
        cov = (1.0 + 1.0 / s) * bread
        return np.sqrt(np.maximum(np.diag(cov), 0.0))

    k = problem.n_stats
    c_bb = problem.moment_cov[:k, :k]
    c_bm = problem.moment_cov[:k, k:]
    c_mm = problem.moment_cov[k:, k:]
    g = _moment_jacobian(theta, problem)
    # per-replica statistic dispersion estimates the simulation-noise term
    try:
        reps = replica_statistics(problem.params_at(theta), problem)
        c_sim = np.cov(reps.T) / s
    except TargetingError:
        c_sim = c_bb / s
    mid = c_bb - g @ c_bm.T - c_bm @ g.T + g @ c_mm @ g.T + c_sim
    a = bread @ jac.T @ omega
    cov = a @ mid @ a.T
    return np.sqrt(np.maximum(np.diag(cov), 0.0))


def implied_aux(result_or_params, problem):
    """Mean matched statistics across replicas at the estimate."""
    params = (result_or_params.params
              if isinstance(result_or_params, IIResult) else result_or_params)
    return replica_statistics(params, problem).mean(axis=0)


def _plug_in_lag(x):
    """Bartlett truncation for one moment series (AR(1) plug-in rule).

    Persistent variance series need a far longer bandwidth than the
    regression-residual default; this is the standard data-driven choice."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.size
    denom = float(x[:-1] @ x[:-1])
    rho = float(x[1:] @ x[:-1]) / denom if denom > 0 else 0.0
    rho = min(max(rho, 0.0), 0.97)
    if rho == 0.0:
        return 0
    alpha = 4.0 * rho ** 2 / (1.0 - rho ** 2) ** 2
    return min(int(1.1447 * (alpha * n) ** (1.0 / 3.0)), n // 4)


def statistic_vector(fit_result):
    """Matched statistics of one fit: coefficients plus residual variance."""
    return np.append(fit_result.coef, fit_result.resid_var)


def stacked_covariance(panel, spec, data_fit, lag=None):
    """Joint HAC covariance of (coefficients, resid var, mean C, var C).

    Stacks the OLS influence functions, the residual-variance moment, and
    the centered moment functions of the continuous series on the regression
    rows.  The Bartlett truncation follows the plug-in rule on the most
    persistent moment series, which dominates the fit's short residual lag.
    """
    agg = aggregate(panel, percentage=True)
    y, X, names, dates = build_design(agg, spec)
    n, k = X.shape
    eps = y - X @ data_fit.coef
    xtx_n = X.T @ X / n
    psi_beta = np.linalg.solve(xtx_n, (X * eps[:, None]).T).T
    psi_s2 = (eps ** 2 - eps @ eps / n)[:, None]

    date_rows = {d: i for i, d in enumerate(panel.dates)}
    chat = np.array([panel.c[date_rows[d]] for d in dates])
    mu = chat.mean()
    var = chat.var()
    psi_m = np.column_stack([chat - mu, (chat - mu) ** 2 - var])
    if lag is None:
        lag = max(data_fit.lag, _plug_in_lag(psi_m[:, 0]),
                  _plug_in_lag(psi_m[:, 1]))

    psi = np.column_stack([psi_beta, psi_s2, psi_m])
    psi = psi - psi.mean(axis=0)
    s = psi.T @ psi
    for j in range(1, lag + 1):
        w = 1.0 - j / (lag + 1.0)
        gamma = psi[j:].T @ psi[:-j]
        s += w * (gamma + gamma.T)
    return s / n ** 2


def build_problem(panel, model, n_days=None, seed=0, est=None,
                  threshold=None, lag=None, **problem_kwargs):
    """Assemble an estimation problem from a treated measures panel.

    Fits the auxiliary regression on the data, collects targeting moments
    and their joint covariance, and sizes replicas to the data sample length
    unless overridden.  Extra keyword arguments pass through to IIProblem
    (bounds, start, weight overrides).
    """
    est = est or EstimateConfig()
    threshold = threshold or ThresholdConfig()
    agg = aggregate(panel, percentage=True)
    spec = aux_spec_for(model)
    data_fit = fit(agg, spec, lag=lag)
    _, info = target(panel, model)
    if n_days is None:
        n_days = est.replica_days or len(panel)
    mcov = stacked_covariance(panel, spec, data_fit)
    return IIProblem(model=model, data_fit=data_fit, info=info,
                     n_days=n_days, seed=seed, est=est, threshold=threshold,
                     moment_cov=mcov, **problem_kwargs)
