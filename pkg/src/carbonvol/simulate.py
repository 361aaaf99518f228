"""Two-factor square-root stochastic volatility with price jumps.

Historical-measure simulation for indirect inference and risk-neutral
simulation for pricer validation, both on a full-truncation Euler scheme
(variance floored at zero inside drift and diffusion).  Randomness comes
from counter-based streams keyed by (seed, replica index) so serial and
parallel execution, and repeated evaluations under common random numbers,
consume identical variates.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.random import Generator, Philox

from .backend import kernels
from .config import SimConfig
from .errors import CarbonVolError


@dataclass(frozen=True)
class StructuralParams:
    """Historical-measure parameters, daily non-percentage units.

    ``kappa*`` mean-reversion speeds per day, ``omega`` the shared long-run
    variance level per factor, ``lam*`` the vol-of-vol loadings, ``rho*`` the
    price/variance correlations; jumps are compound Poisson with
    ``jump_intensity`` per day and Gaussian sizes.
    """

    kappa1: float
    kappa2: float
    omega: float
    lam1: float
    lam2: float
    rho1: float = 0.0
    rho2: float = 0.0
    jump_intensity: float = 0.0
    jump_mean: float = 0.0
    jump_std: float = 0.0
    drift_mode: str = "zero"
    drift_const: float = 0.0

    def __post_init__(self):
        if self.kappa1 <= 0 or self.kappa2 <= 0:
            raise ValueError("mean-reversion speeds must be positive")
        if self.lam1 < 0 or self.lam2 < 0 or self.jump_std < 0:
            raise ValueError("lam1, lam2 and jump_std must be non-negative")
        if self.jump_intensity < 0:
            raise ValueError("jump intensity must be non-negative")
        for rho in (self.rho1, self.rho2):
            if not -1.0 <= rho <= 1.0:
                raise ValueError("correlations must lie in [-1, 1]")
        if self.drift_mode not in ("zero", "explicit"):
            raise ValueError("drift_mode must be 'zero' or 'explicit'")

    @property
    def has_jumps(self):
        return self.jump_intensity > 0.0

    def to_dict(self):
        from dataclasses import asdict
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class SimOutput:
    """Per-replica intraday returns plus ground-truth oracles."""

    returns: np.ndarray        # (n_replicas, n_days, m)
    iv_grid: np.ndarray        # (n_replicas, n_days, m) integrated variance
    true_jump_var: np.ndarray  # (n_replicas, n_days)
    true_jump_count: np.ndarray

    @property
    def true_iv(self):
        """Per-day integrated diffusive variance."""
        return self.iv_grid.sum(axis=2)

    @property
    def daily_returns(self):
        return self.returns.sum(axis=2)

    @property
    def n_replicas(self):
        return self.returns.shape[0]


def replica_stream(seed, replica):
    """Counter-based generator for one replica; stable under parallelism."""
    return Generator(Philox(key=np.array([seed, replica], dtype=np.uint64)))


def draw_replica_noise(seed, replica, n_steps):
    """Pre-draw the variates one replica consumes, in the contract order."""
    g = replica_stream(seed, replica)
    z = g.standard_normal((n_steps, 4))
    u_jump = g.random(n_steps)
    z_jump = g.standard_normal(n_steps)
    return z, u_jump, z_jump


def _drift(params):
    if params.drift_mode == "zero":
        return 0.0, False
    return params.drift_const, True


def simulate(params, config, noise=None):
    """Simulate ``config.n_replicas`` replicas under the historical measure.

    Deterministic given ``config.seed``; replicas are independent streams and
    may be generated in any order.  ``noise`` may carry pre-drawn per-replica
    (z, u_jump, z_jump) tuples (the common-random-numbers path re-evaluates
    many parameter points on the same draws).
    """
    if not isinstance(params, StructuralParams):
        raise TypeError("params must be StructuralParams")
    m = config.intervals_per_day
    dt = config.dt
    burn_steps = config.burn_in_days * m * config.substeps
    n_steps = burn_steps + config.n_days * m * config.substeps
    v1_init = params.omega if config.v1_init is None else config.v1_init
    v2_init = params.omega if config.v2_init is None else config.v2_init
    mu0, convexity = _drift(params)

    rets = np.empty((config.n_replicas, config.n_days, m))
    iv = np.empty((config.n_replicas, config.n_days, m))
    jv = np.empty((config.n_replicas, config.n_days))
    nj = np.empty((config.n_replicas, config.n_days), dtype=np.int64)
    for rep in range(config.n_replicas):
        if noise is None:
            z, u_jump, z_jump = draw_replica_noise(config.seed, rep, n_steps)
        else:
            z, u_jump, z_jump = noise[rep]
        out = kernels.euler_intraday(
            z, u_jump, z_jump,
            params.kappa1, params.omega, params.lam1, params.rho1,
            params.kappa2, params.omega, params.lam2, params.rho2,
            params.jump_intensity, params.jump_mean, params.jump_std,
            mu0, convexity, dt,
            config.n_days, m, config.substeps, burn_steps,
            v1_init, v2_init)
        rets[rep], iv[rep], jv[rep], nj[rep] = out
        if not np.isfinite(rets[rep]).all():
            raise CarbonVolError(f"replica {rep} produced non-finite states")
    return SimOutput(rets, iv, jv, nj)


def stationary_moments(params):
    """Mean and variance of the stationary total variance sigma1^2 + sigma2^2."""
    mean = 2.0 * params.omega
    var = params.omega * (params.lam1 ** 2 / (2.0 * params.kappa1)
                          + params.lam2 ** 2 / (2.0 * params.kappa2))
    return mean, var


_TERMINAL_CHUNK = 512


def simulate_terminal(params_tuple, mu0, convexity, dt, n_steps, checkpoints,
                      v1_init, v2_init, n_paths, seed):
    """Cumulative log-returns of many paths at checkpoint steps.

    ``params_tuple`` is (kappa1, omega1, lam1, rho1, kappa2, omega2, lam2,
    rho2, jump_intensity, jump_mean, jump_std); the caller supplies the full
    drift constant (risk-free rate net of the jump compensator, say).  Paths
    are drawn in fixed chunks so results depend only on (seed, n_paths).
    """
    checkpoints = np.asarray(sorted(checkpoints), dtype=np.int64)
    if checkpoints.size and checkpoints[-1] > n_steps:
        raise ValueError("checkpoint beyond final step")
    out = np.empty((n_paths, checkpoints.size))
    done = 0
    chunk_idx = 0
    while done < n_paths:
        take = min(_TERMINAL_CHUNK, n_paths - done)
        g = Generator(Philox(key=np.array([seed, 2 ** 32 + chunk_idx],
                                          dtype=np.uint64)))
        z = g.standard_normal((take, n_steps, 4))
        u_jump = g.random((take, n_steps))
        z_jump = g.standard_normal((take, n_steps))
        out[done:done + take] = kernels.euler_terminal(
            z, u_jump, z_jump, *params_tuple,
            mu0, convexity, dt, checkpoints, v1_init, v2_init)
        done += take
        chunk_idx += 1
    return out
