"""Risk-neutral map, characteristic function, Fourier pricing, calibration."""

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonvol.config import CalibrateConfig, PricerConfig
from carbonvol.errors import (AdmissibilityError, BoundViolationError,
                              ConvergenceError, PricingError)
from carbonvol.pricing import (OptionQuote, RiskPremia, black76_price,
                               calibrate_premia, char_fn, fourier_price,
                               implied_vol, iv_objective, log_char_fn,
                               market_iv, maturity_buckets, model_iv,
                               moneyness_buckets, monte_carlo_price,
                               risk_neutralize, rmse_iv, rmse_iv_cross)
from carbonvol.simulate import StructuralParams

from conftest import TWO_SV, TWO_SVJ

PREMIA = RiskPremia(phi=-7.35e-3, psi1=2.81e-3, psi2=1.50e-2)


def heston_log_cf_reference(z, tau, kappa, omega, lam, rho, v0):
    """Independent single-factor implementation (textbook rotation-safe form).

    Written from the standard Riccati solution, kept separate from the
    production code path on purpose.
    """
    b = kappa - 1j * rho * lam * z
    d = cmath.sqrt(b * b + (lam ** 2) * (z * 1j + z * z))
    g = (b - d) / (b + d)
    e = cmath.exp(-d * tau)
    big_c = (kappa * omega / lam ** 2) * (
        (b - d) * tau - 2.0 * cmath.log((1 - g * e) / (1 - g)))
    big_d = ((b - d) / lam ** 2) * (1 - e) / (1 - g * e)
    return big_c + big_d * v0


def heston_log_cf_ode(z, tau, kappa, omega, lam, rho, v0):
    """Second independent oracle: numerically integrated Riccati system."""
    from scipy.integrate import solve_ivp

    def rhs(t, y):
        a, bb = y
        db = (0.5 * lam ** 2 * bb * bb
              - (kappa - 1j * z * rho * lam) * bb - 0.5 * z * (1j + z))
        da = kappa * omega * bb
        return [da, db]

    sol = solve_ivp(rhs, (0.0, tau), [0j, 0j], rtol=1e-12, atol=1e-14,
                    method="DOP853")
    a, bb = sol.y[:, -1]
    return a + bb * v0


class TestRiskNeutralize:
    def test_zero_premia_identity(self):
        qp = risk_neutralize(TWO_SVJ, RiskPremia())
        assert qp.kappa1 == TWO_SVJ.kappa1
        assert qp.kappa2 == TWO_SVJ.kappa2
        assert qp.omega1 == pytest.approx(TWO_SVJ.omega, rel=1e-15)
        assert qp.drift_level1 == TWO_SVJ.kappa1 * TWO_SVJ.omega
        assert qp.jump_intensity == TWO_SVJ.jump_intensity
        assert qp.jump_mean == TWO_SVJ.jump_mean

    def test_hand_derived_kappa_star(self):
        qp = risk_neutralize(TWO_SVJ, PREMIA)
        want = (3.93e-2 - (-7.35e-3) * (-0.82) * 8.28e-3
                - 2.81e-3 * 8.28e-3 ** 2)
        assert qp.kappa1 == pytest.approx(want, rel=1e-12)
        assert qp.kappa1 == pytest.approx(3.9250e-2, rel=1e-4)

    def test_hand_derived_jump_intensity(self):
        qp = risk_neutralize(TWO_SVJ, PREMIA)
        want = 0.72 * math.exp((-7.35e-3) * (-7.9e-3)
                               + 0.5 * 7.35e-3 ** 2 * 8.5e-3 ** 2)
        assert qp.jump_intensity == pytest.approx(want, rel=1e-12)
        assert qp.jump_intensity == pytest.approx(0.72004, rel=1e-5)

    def test_drift_level_preserved_exactly(self):
        qp = risk_neutralize(TWO_SVJ, PREMIA)
        assert qp.drift_level1 == TWO_SVJ.kappa1 * TWO_SVJ.omega
        assert qp.drift_level2 == TWO_SVJ.kappa2 * TWO_SVJ.omega
        assert qp.kappa1 * qp.omega1 == pytest.approx(
            TWO_SVJ.kappa1 * TWO_SVJ.omega, rel=1e-15)

    def test_jump_mean_shift(self):
        qp = risk_neutralize(TWO_SVJ, PREMIA)
        assert qp.jump_mean == pytest.approx(
            TWO_SVJ.jump_mean + PREMIA.phi * TWO_SVJ.jump_std ** 2)

    def test_inadmissible_raises(self):
        with pytest.raises(AdmissibilityError):
            risk_neutralize(TWO_SVJ, RiskPremia(phi=0.0, psi1=600.0,
                                                psi2=0.0))


class TestCharFn:
    def test_normalization_at_zero(self):
        qp = risk_neutralize(TWO_SVJ, PREMIA)
        state = (math.log(28.0), 2e-4, 2e-4)
        assert char_fn(0.0, state, qp, 90.0) == pytest.approx(1.0, abs=1e-12)

    def test_martingale_identity(self):
        qp = risk_neutralize(TWO_SVJ, PREMIA, r=1e-4, q=5e-5)
        state = (math.log(28.0), 2e-4, 3e-4)
        for tau in (1.0, 90.0, 365.0):
            want = math.exp(state[0] + (qp.r - qp.q) * tau)
            got = char_fn(-1j, state, qp, tau)
            assert abs(got - want) < 1e-10

    @pytest.mark.parametrize("z", [0.5, 2.0, -3.0, 10.0])
    def test_single_factor_reduction_matches_reference(self, z):
        # factor 2 and jumps off: compare against the independent oracle
        p = StructuralParams(kappa1=2.0, kappa2=1.0, omega=4e-4,
                             lam1=0.05, lam2=0.0, rho1=-0.7)
        qp = risk_neutralize(p, RiskPremia())
        x, v0, tau = math.log(25.0), 3e-4, 60.0
        got = log_char_fn(z, (x, v0, 0.0), qp, tau)
        ref = (1j * z * x
               + heston_log_cf_reference(z, tau, 2.0, 4e-4, 0.05, -0.7, v0))
        # remove factor 2's deterministic part (omega2 > 0, lam2 = 0)
        from carbonvol.pricing import _factor_terms
        a2, b2 = _factor_terms(z, tau, qp.kappa2, qp.drift_level2, 0.0, 0.0)
        got = got - a2 - b2 * 0.0
        assert abs(got - ref) < 1e-12 * max(1.0, abs(ref))

    @pytest.mark.parametrize("z", [0.7, 4.0])
    def test_matches_ode_integration(self, z):
        p = StructuralParams(kappa1=1.5, kappa2=1.0, omega=5e-4,
                             lam1=0.04, lam2=0.0, rho1=-0.5)
        qp = risk_neutralize(p, RiskPremia())
        tau = 30.0
        from carbonvol.pricing import _factor_terms
        a1, b1 = _factor_terms(z, tau, qp.kappa1, qp.drift_level1, qp.lam1, qp.rho1)
        got = a1 + b1 * 2e-4
        ref = heston_log_cf_ode(z, tau, 1.5, 5e-4, 0.04, -0.5, 2e-4)
        assert abs(got - ref) < 1e-9

    def test_long_maturity_continuity(self):
        # no branch-cut jumps in the log-CF along a tau scan
        qp = risk_neutralize(TWO_SVJ, PREMIA)
        state = (math.log(28.0), 4e-4, 4e-4)
        taus = np.linspace(1.0, 720.0, 400)
        vals = np.array([log_char_fn(3.0, state, qp, t) for t in taus])
        dphase = np.abs(np.diff(np.imag(vals)))
        assert dphase.max() < 1.0

    def test_overflow_raises(self):
        qp = risk_neutralize(TWO_SVJ, PREMIA)
        state = (math.log(28.0), 4e-4, 4e-4)
        with pytest.raises(PricingError):
            char_fn(-4000j, state, qp, 365.0)


class TestBlack76:
    def test_atm_reference_value(self):
        got = black76_price("call", 100.0, 100.0, 1.0, 0.0, 0.2)
        assert got == pytest.approx(7.9656, abs=5e-5)

    def test_call_put_symmetry_atm(self):
        c = black76_price("call", 50.0, 50.0, 0.7, 0.0, 0.4)
        p = black76_price("put", 50.0, 50.0, 0.7, 0.0, 0.4)
        assert c == pytest.approx(p, rel=1e-12)

    def test_zero_vol_limit(self):
        c = black76_price("call", 120.0, 100.0, 1.0, 0.0, 1e-9)
        assert c == pytest.approx(20.0, abs=1e-6)

    def test_implied_vol_round_trip(self):
        price = black76_price("call", 28.0, 31.0, 0.25, 0.0, 0.6)
        iv = implied_vol(price, "call", 28.0, 31.0, 0.25, 0.0)
        assert iv == pytest.approx(0.6, abs=1e-9)

    @given(st.floats(0.05, 2.5), st.sampled_from(["call", "put"]),
           st.floats(0.7, 1.4))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, sigma, kind, moneyness):
        # the solver's contract is price-space: |gap| < iv_tol * forward
        f, tau, r = 30.0, 0.4, 0.01
        price = black76_price(kind, f, moneyness * f, tau, r, sigma)
        lo = math.exp(-r * tau) * max((f - moneyness * f)
                                      if kind == "call"
                                      else (moneyness * f - f), 0.0)
        if price - lo < 1e-12 * f:
            return  # numerically at the intrinsic bound
        iv = implied_vol(price, kind, f, moneyness * f, tau, r)
        back = black76_price(kind, f, moneyness * f, tau, r, iv)
        assert abs(back - price) < 2e-10 * f

    def test_bound_violation_raises(self):
        with pytest.raises(BoundViolationError):
            implied_vol(30.0, "call", 28.0, 30.0, 0.25, 0.0)
        with pytest.raises(BoundViolationError):
            implied_vol(0.0, "call", 28.0, 30.0, 0.25, 0.0)


class TestFourierPrice:
    def setup_method(self):
        self.qp = risk_neutralize(TWO_SVJ, PREMIA)
        self.state = (math.log(28.0), 2.2e-4, 2.2e-4)

    def test_zero_vol_degenerates_to_intrinsic(self):
        p = StructuralParams(kappa1=1.0, kappa2=1.0, omega=1e-12,
                             lam1=0.0, lam2=0.0)
        qp = risk_neutralize(p, RiskPremia())
        state = (math.log(30.0), 1e-12, 1e-12)
        call = fourier_price("call", 24.0, 30.0, state, qp)
        assert call == pytest.approx(6.0, abs=1e-8)
        put = fourier_price("put", 24.0, 30.0, state, qp)
        assert put == pytest.approx(0.0, abs=1e-8)

    def test_black76_reduction(self):
        omega = 4.3e-4 / 2
        p = StructuralParams(kappa1=1.0, kappa2=1.0, omega=omega,
                             lam1=0.0, lam2=0.0)
        qp = risk_neutralize(p, RiskPremia())
        sigma_daily = math.sqrt(2 * omega)
        for strike in (22.0, 28.0, 34.0):
            for tau in (5.0, 90.0, 300.0):
                state = (math.log(28.0), omega, omega)
                got = fourier_price("call", strike, tau, state, qp)
                want = black76_price("call", 28.0, strike, tau, 0.0,
                                     sigma_daily)
                assert got == pytest.approx(want, abs=1e-6)

    def test_put_call_parity(self):
        for strike in (20.0, 28.0, 40.0):
            call = fourier_price("call", strike, 120.0, self.state, self.qp)
            put = fourier_price("put", strike, 120.0, self.state, self.qp)
            assert call - put == pytest.approx(28.0 - strike, abs=1e-8)

    def test_monotone_in_strike_and_variance(self):
        strikes = np.linspace(20.0, 40.0, 9)
        prices = [fourier_price("call", k, 90.0, self.state, self.qp)
                  for k in strikes]
        assert np.all(np.diff(prices) < 0)
        bumped = (self.state[0], 4e-4, 4e-4)
        for k in (24.0, 28.0, 33.0):
            assert (fourier_price("call", k, 90.0, bumped, self.qp)
                    > fourier_price("call", k, 90.0, self.state, self.qp))

    def test_grid_doubling_stable(self):
        a = fourier_price("call", 30.0, 90.0, self.state, self.qp,
                          PricerConfig(n_grid=4096))
        b = fourier_price("call", 30.0, 90.0, self.state, self.qp,
                          PricerConfig(n_grid=8192))
        assert abs(a - b) < 1e-7

    def test_insufficient_grid_raises(self):
        with pytest.raises(ConvergenceError):
            fourier_price("call", 30.0, 90.0, self.state, self.qp,
                          PricerConfig(n_grid=16))

    def test_matches_monte_carlo_smoke(self):
        # 9-cell x 1e6-path check lives in the acceptance suite
        mc = monte_carlo_price("call", [28.0], [60.0], self.state, self.qp,
                               n_paths=60_000, seed=77, substeps_per_day=24)
        price, se = mc[(60.0, 28.0)]
        cos = fourier_price("call", 28.0, 60.0, self.state, self.qp)
        assert abs(cos - price) < 3.5 * se


class TestModelIv:
    def test_deep_otm_clipped_not_failing(self):
        qp = risk_neutralize(TWO_SV, RiskPremia())
        quote = OptionQuote(kind="put", strike=5.0, forward=28.0,
                            tau_days=10.0, price=0.01)
        iv = model_iv(quote, qp, (math.log(28.0), 1e-5, 1e-5))
        assert iv > 0.0

    def test_market_iv_prefers_quoted_field(self):
        quote = OptionQuote(kind="call", strike=28.0, forward=28.0,
                            tau_days=30.0, price=1.0, market_iv=0.55)
        assert market_iv(quote) == 0.55


class TestCalibration:
    def make_surface(self, premia, n=14, seed=5):
        qp = risk_neutralize(TWO_SVJ, premia)
        rng = np.random.default_rng(seed)
        quotes = []
        states = {}
        for i in range(n):
            forward = 20.0 + 10.0 * rng.random()
            chat = 4e-4 * (0.5 + rng.random())
            date = f"d{i}"
            states[date] = (chat / 2, chat / 2)
            mny = rng.choice([0.85, 0.95, 1.0, 1.1, 1.2])
            kind = "put" if mny < 1 else "call"
            tau = rng.choice([30.0, 90.0, 150.0])
            strike = mny * forward
            state = (math.log(forward), chat / 2, chat / 2)
            price = fourier_price(kind, strike, tau, state, qp)
            quotes.append(OptionQuote(kind=kind, strike=strike,
                                      forward=forward, tau_days=tau,
                                      price=price, date=date))
        return quotes, states

    def test_objective_zero_at_truth(self):
        quotes, states = self.make_surface(PREMIA)
        f = iv_objective(PREMIA, quotes, TWO_SVJ, states)
        assert f < 1e-8

    def test_recovery_smoke(self):
        quotes, states = self.make_surface(PREMIA)
        calib = CalibrateConfig(n_starts=3, max_iterations=200)
        premia, f_obj = calibrate_premia(quotes, TWO_SVJ, states, calib=calib)
        assert f_obj < 1e-5
        assert premia.phi == pytest.approx(PREMIA.phi, rel=0.05)

    def test_too_few_quotes_raises(self):
        quotes, states = self.make_surface(PREMIA, n=2)
        with pytest.raises(PricingError):
            calibrate_premia(quotes, TWO_SVJ, states)


class TestRmseBuckets:
    def test_bucket_boundaries(self):
        m = [0.84999, 0.85, 1.0, 1.1, 1.10001]
        labels = [lbl for lbl, mask in moneyness_buckets(m) for _ in [0]]
        masks = dict(moneyness_buckets(m))
        assert masks["m < 0.85"].tolist() == [True, False, False, False, False]
        assert masks["0.85 <= m <= 1.1"].tolist() == [False, True, True, True,
                                                      False]
        assert masks["m > 1.1"].tolist() == [False, False, False, False, True]
        t = [50.0, 50.0001, 90.0, 160.0, 161.0]
        masks = dict(maturity_buckets(t))
        assert masks["tau <= 50"].tolist() == [True, False, False, False,
                                               False]
        assert masks["50 < tau <= 90"].tolist() == [False, True, True, False,
                                                    False]
        assert masks["90 < tau <= 160"].tolist() == [False, False, False,
                                                     True, False]
        assert masks["tau > 160"].tolist() == [False, False, False, False,
                                               True]

    def test_exact_bookkeeping(self):
        # known per-quote IV gaps: bucket RMSE must match hand arithmetic
        qp = risk_neutralize(TWO_SV, RiskPremia())
        state_map = {}
        quotes = []
        gaps = [0.05, -0.03, 0.02, 0.04]
        mny = [0.80, 0.90, 1.00, 1.20]
        taus = [40.0, 70.0, 120.0, 200.0]
        for i, (g, m, t) in enumerate(zip(gaps, mny, taus)):
            forward = 28.0
            strike = m * forward
            kind = "put" if m < 1 else "call"
            date = f"d{i}"
            state_map[date] = (2e-4, 2e-4)
            state = (math.log(forward), 2e-4, 2e-4)
            model = model_iv(OptionQuote(kind=kind, strike=strike,
                                         forward=forward, tau_days=t,
                                         date=date), qp, state)
            quotes.append(OptionQuote(kind=kind, strike=strike,
                                      forward=forward, tau_days=t,
                                      market_iv=model - g, date=date))
        table = rmse_iv(quotes, RiskPremia(), TWO_SV, state_map)
        assert table["m < 0.85"]["rmse_iv"] == pytest.approx(5.0, abs=1e-6)
        mid = math.sqrt((0.03 ** 2 + 0.02 ** 2) / 2) * 100
        assert table["0.85 <= m <= 1.1"]["rmse_iv"] == pytest.approx(
            mid, abs=1e-6)
        assert table["m > 1.1"]["rmse_iv"] == pytest.approx(4.0, abs=1e-6)
        bytau = rmse_iv(quotes, RiskPremia(), TWO_SV, state_map,
                        by="maturity")
        assert bytau["tau <= 50"]["rmse_iv"] == pytest.approx(5.0, abs=1e-6)
        assert bytau["tau > 160"]["rmse_iv"] == pytest.approx(4.0, abs=1e-6)
        cross = rmse_iv_cross(quotes, RiskPremia(), TWO_SV, state_map)
        assert cross["m < 0.85"]["tau <= 50"]["count"] == 1

    def test_perfect_model_zero_everywhere(self):
        qp = risk_neutralize(TWO_SV, RiskPremia())
        quotes = []
        states = {}
        for i, m in enumerate((0.8, 1.0, 1.2)):
            date = f"d{i}"
            states[date] = (2e-4, 2e-4)
            state = (math.log(28.0), 2e-4, 2e-4)
            kind = "put" if m < 1 else "call"
            iv = model_iv(OptionQuote(kind=kind, strike=m * 28.0,
                                      forward=28.0, tau_days=60.0,
                                      date=date), qp, state)
            quotes.append(OptionQuote(kind=kind, strike=m * 28.0,
                                      forward=28.0, tau_days=60.0,
                                      market_iv=iv, date=date))
        table = rmse_iv(quotes, RiskPremia(), TWO_SV, states)
        for cell in table.values():
            assert cell["rmse_iv"] == pytest.approx(0.0, abs=1e-9)

    def test_empty_bucket_absent(self):
        qp = risk_neutralize(TWO_SV, RiskPremia())
        states = {"d0": (2e-4, 2e-4)}
        state = (math.log(28.0), 2e-4, 2e-4)
        iv = model_iv(OptionQuote(kind="call", strike=28.0, forward=28.0,
                                  tau_days=60.0, date="d0"), qp, state)
        quotes = [OptionQuote(kind="call", strike=28.0, forward=28.0,
                              tau_days=60.0, market_iv=iv, date="d0")]
        table = rmse_iv(quotes, RiskPremia(), TWO_SV, states)
        assert list(table) == ["0.85 <= m <= 1.1"]
