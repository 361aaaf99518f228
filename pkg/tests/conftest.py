import numpy as np
import pytest

from carbonvol.config import SimConfig, ThresholdConfig
from carbonvol.measures import MeasuresPanel
from carbonvol.simulate import StructuralParams, simulate

# historical two-factor estimates used as a realistic parameter anchor
TWO_SV = StructuralParams(kappa1=5.14e-2, kappa2=2.63, omega=4.32e-4,
                          lam1=9.72e-3, lam2=3.29e-2)
TWO_SVJ = StructuralParams(kappa1=3.93e-2, kappa2=2.03, omega=4.31e-4,
                           lam1=8.28e-3, lam2=3.20e-2, rho1=-0.82,
                           rho2=-0.11, jump_intensity=0.72,
                           jump_mean=-7.9e-3, jump_std=8.5e-3)


@pytest.fixture(scope="session")
def two_sv_params():
    return TWO_SV


@pytest.fixture(scope="session")
def two_svj_params():
    return TWO_SVJ


@pytest.fixture(scope="session")
def sim_two_sv():
    """One 600-day replica of the no-jump model."""
    return simulate(TWO_SV, SimConfig(n_days=600, seed=11, n_replicas=1,
                                      burn_in_days=150))


@pytest.fixture(scope="session")
def measures_panel(sim_two_sv):
    """Measures panel over the simulated sample (no jump test needed)."""
    from carbonvol.measures import measure_panel
    sim = sim_two_sv
    return measure_panel(sim.returns[0], sim.daily_returns[0], full=False)


def make_panel(rv, r=None, n_jumps=None, jump_sizes=None):
    """Hand-built measures panel for unit tests (c = rv, j = 0 default)."""
    rv = np.asarray(rv, dtype=float)
    n = rv.size
    if r is None:
        r = np.zeros(n)
    if n_jumps is None:
        n_jumps = np.zeros(n, dtype=int)
    if jump_sizes is None:
        jump_sizes = [np.empty(0)] * n
    return MeasuresPanel(dates=np.arange(n), rv=rv, c=rv.copy(),
                         j=np.zeros(n), ctz=np.zeros(n),
                         n_jumps=np.asarray(n_jumps, dtype=int),
                         jump_sizes=jump_sizes,
                         r=np.asarray(r, dtype=float),
                         r_adj=np.asarray(r, dtype=float).copy(),
                         capped=np.zeros(n, dtype=bool))
