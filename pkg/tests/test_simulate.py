"""Simulator oracles: exact Gaussian limits, jump law, stationary moments."""

import math

import numpy as np
import pytest
from scipy import stats

from carbonvol.config import SimConfig
from carbonvol.simulate import (StructuralParams, draw_replica_noise,
                                replica_stream, simulate, simulate_terminal,
                                stationary_moments)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            StructuralParams(kappa1=0.0, kappa2=1.0, omega=1e-4, lam1=0.01,
                             lam2=0.01)
        with pytest.raises(ValueError):
            StructuralParams(kappa1=1.0, kappa2=1.0, omega=1e-4, lam1=0.01,
                             lam2=0.01, rho1=-1.5)
        with pytest.raises(ValueError):
            StructuralParams(kappa1=1.0, kappa2=1.0, omega=1e-4, lam1=0.01,
                             lam2=0.01, drift_mode="bogus")

    def test_roundtrip_dict(self, two_svj_params):
        d = two_svj_params.to_dict()
        assert StructuralParams.from_dict(d) == two_svj_params


class TestDeterminism:
    def test_bit_identical_given_seed(self, two_sv_params):
        cfg = SimConfig(n_days=30, seed=5, n_replicas=2, burn_in_days=10)
        a = simulate(two_sv_params, cfg)
        b = simulate(two_sv_params, cfg)
        np.testing.assert_array_equal(a.returns, b.returns)
        np.testing.assert_array_equal(a.true_jump_count, b.true_jump_count)

    def test_replica_streams_independent_of_order(self):
        za = draw_replica_noise(9, 3, 1000)
        zb = draw_replica_noise(9, 3, 1000)
        np.testing.assert_array_equal(za[0], zb[0])
        zc = draw_replica_noise(9, 4, 1000)
        assert not np.array_equal(za[0], zc[0])


class TestGaussianLimit:
    def test_constant_variance_daily_returns(self):
        # lam = 0, jumps off, v0 = omega: exact Gaussian with var 2 omega/day
        omega = 4.3e-4
        p = StructuralParams(kappa1=1.0, kappa2=1.0, omega=omega,
                             lam1=0.0, lam2=0.0)
        sim = simulate(p, SimConfig(n_days=4000, seed=6, n_replicas=1,
                                    burn_in_days=0))
        r = sim.daily_returns[0]
        var = r.var(ddof=1)
        se = 2.0 * omega * math.sqrt(2.0 / 4000)
        assert abs(var - 2.0 * omega) < 3 * se
        assert stats.normaltest(r).pvalue > 1e-4

    def test_iv_grid_matches_constant_variance(self):
        omega = 4.3e-4
        p = StructuralParams(kappa1=1.0, kappa2=1.0, omega=omega,
                             lam1=0.0, lam2=0.0)
        sim = simulate(p, SimConfig(n_days=5, seed=7, n_replicas=1,
                                    burn_in_days=0))
        np.testing.assert_allclose(sim.iv_grid, 2 * omega / 120, rtol=1e-12)


class TestJumps:
    def test_poisson_counts_gof(self):
        p = StructuralParams(kappa1=1.0, kappa2=1.0, omega=1e-8,
                             lam1=0.0, lam2=0.0, jump_intensity=5.0,
                             jump_mean=0.0, jump_std=0.01)
        sim = simulate(p, SimConfig(n_days=10_000, seed=8, n_replicas=1,
                                    burn_in_days=0))
        counts = sim.true_jump_count[0]
        assert counts.mean() == pytest.approx(5.0, abs=0.1)
        kmax = 12
        observed = np.bincount(np.minimum(counts, kmax), minlength=kmax + 1)
        pmf = stats.poisson.pmf(np.arange(kmax + 1), 5.0)
        pmf[kmax] = 1.0 - pmf[:kmax].sum()
        chi2 = stats.chisquare(observed, pmf * counts.size)
        assert chi2.pvalue > 0.01

    def test_jump_bookkeeping_exact(self):
        # deterministic sizes: jump variation must equal count * size^2
        size = 0.01
        p = StructuralParams(kappa1=1.0, kappa2=1.0, omega=1e-10,
                             lam1=0.0, lam2=0.0, jump_intensity=0.3,
                             jump_mean=size, jump_std=0.0)
        sim = simulate(p, SimConfig(n_days=2000, seed=9, n_replicas=1,
                                    burn_in_days=0))
        counts = sim.true_jump_count[0]
        jv = sim.true_jump_var[0]
        singles = counts <= 1  # merged same-substep jumps excluded
        np.testing.assert_allclose(jv[singles],
                                   counts[singles] * size ** 2, atol=1e-18)

    def test_jumps_end_up_in_returns(self):
        size = 0.02
        p = StructuralParams(kappa1=1.0, kappa2=1.0, omega=1e-12,
                             lam1=0.0, lam2=0.0, jump_intensity=0.1,
                             jump_mean=size, jump_std=0.0)
        sim = simulate(p, SimConfig(n_days=500, seed=10, n_replicas=1,
                                    burn_in_days=0))
        got = sim.daily_returns[0]
        want = sim.true_jump_count[0] * size
        np.testing.assert_allclose(got, want, atol=1e-5)


class TestVariancePositivity:
    def test_feller_violating_params_stay_finite(self, two_svj_params):
        sim = simulate(two_svj_params,
                       SimConfig(n_days=500, seed=11, n_replicas=2,
                                 burn_in_days=50))
        assert np.isfinite(sim.returns).all()
        assert (sim.iv_grid >= 0.0).all()


class TestCorrelationRecovery:
    @pytest.mark.parametrize("rho", [-0.8, 0.5])
    def test_leverage_correlation(self, rho):
        omega = 4e-4
        # kappa2 tiny with v2 = 0 keeps the second factor dead
        p = StructuralParams(kappa1=0.5, kappa2=1e-4, omega=omega,
                             lam1=0.05, lam2=0.0, rho1=rho, rho2=0.0)
        sim = simulate(p, SimConfig(n_days=300, seed=12, n_replicas=1,
                                    burn_in_days=50, v2_init=0.0))
        dx = sim.returns[0].ravel()
        v = sim.iv_grid[0].ravel() * 120.0  # spot variance at interval start
        dv = np.diff(v)
        c = np.corrcoef(dx[:-1], dv)[0, 1]
        n = dv.size
        se = (1 - rho ** 2) / math.sqrt(n)
        assert abs(c - rho) < 3 * se + 0.01


class TestStationaryMoments:
    def test_zero_vol_of_vol(self):
        p = StructuralParams(kappa1=1.0, kappa2=2.0, omega=3e-4,
                             lam1=0.0, lam2=0.0)
        mean, var = stationary_moments(p)
        assert mean == pytest.approx(6e-4)
        assert var == 0.0

    def test_symmetric_factors(self):
        p = StructuralParams(kappa1=2.0, kappa2=2.0, omega=3e-4,
                             lam1=0.05, lam2=0.05)
        _, var = stationary_moments(p)
        assert var == pytest.approx(3e-4 * 0.05 ** 2 / 2.0)

    def test_long_simulation_matches(self):
        # spec example values: kappa = 2, lam = 0.03, omega = 4e-4
        p = StructuralParams(kappa1=2.0, kappa2=2.0, omega=2e-4,
                             lam1=0.03, lam2=0.03)
        mean_th, var_th = stationary_moments(p)
        sim = simulate(p, SimConfig(n_days=4000, seed=13, n_replicas=1,
                                    burn_in_days=100, substeps=2))
        v_spot = sim.iv_grid[0].ravel() * 120.0
        # integration over 1/120 day at kappa=2 barely smooths; compare means
        assert abs(v_spot.mean() / mean_th - 1.0) < 0.02
        smooth = 2 * (2 / 120 - 1 + math.exp(-2 / 120)) / (2 / 120) ** 2
        assert abs(v_spot.var() / (var_th * smooth) - 1.0) < 0.05


class TestRefinement:
    def test_substep_doubling_within_noise(self, two_svj_params):
        cfg1 = SimConfig(n_days=150, seed=14, n_replicas=30, burn_in_days=30,
                         substeps=1)
        cfg2 = SimConfig(n_days=150, seed=14, n_replicas=30, burn_in_days=30,
                         substeps=2)
        rv1 = (simulate(two_svj_params, cfg1).returns ** 2).sum(2).mean(1)
        rv2 = (simulate(two_svj_params, cfg2).returns ** 2).sum(2).mean(1)
        se = math.sqrt(rv1.var(ddof=1) / 30 + rv2.var(ddof=1) / 30)
        assert abs(rv1.mean() - rv2.mean()) < 3 * se


class TestTerminal:
    def test_martingale_under_compensated_drift(self, two_svj_params):
        from carbonvol.pricing import RiskPremia, risk_neutralize
        qp = risk_neutralize(two_svj_params, RiskPremia())
        mu0 = -qp.jump_intensity * qp.jump_compensator
        pt = (qp.kappa1, qp.omega1, qp.lam1, qp.rho1,
              qp.kappa2, qp.omega2, qp.lam2, qp.rho2,
              qp.jump_intensity, qp.jump_mean, qp.jump_std)
        x = simulate_terminal(pt, mu0, True, 1.0 / 24, 24 * 30, [24 * 30],
                              qp.omega1, qp.omega2, 40_000, seed=15)
        f = np.exp(x[:, 0])
        se = f.std(ddof=1) / math.sqrt(f.size)
        assert abs(f.mean() - 1.0) < 3 * se

    def test_deterministic_given_seed(self, two_svj_params):
        pt = (1.0, 4e-4, 0.02, -0.5, 1.0, 4e-4, 0.02, -0.1, 0.5, -0.01, 0.01)
        a = simulate_terminal(pt, 0.0, True, 1.0 / 24, 48, [24, 48],
                              4e-4, 4e-4, 700, seed=16)
        b = simulate_terminal(pt, 0.0, True, 1.0 / 24, 48, [24, 48],
                              4e-4, 4e-4, 700, seed=16)
        np.testing.assert_array_equal(a, b)
