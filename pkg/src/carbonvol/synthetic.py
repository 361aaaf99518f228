"""Synthetic end-to-end fixture: ticks, calendar, and option quotes from
known parameters, for pipeline tests and closed-loop demos."""

import math
from datetime import date, datetime, time, timedelta
from pathlib import Path

import numpy as np

from .config import SessionSpec, SimConfig, PricerConfig
from .pricing import RiskPremia, fourier_price, risk_neutralize
from .simulate import StructuralParams, simulate

DEFAULT_PARAMS = StructuralParams(
    kappa1=5.14e-2, kappa2=2.63, omega=4.32e-4,
    lam1=9.72e-3, lam2=3.29e-2)


def _trading_days(start, count):
    days = []
    d = start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def write_synthetic_ticks(out_dir, params=DEFAULT_PARAMS, n_days=400,
                          seed=1, start_price=20.0,
                          start=date(2018, 1, 2), session=SessionSpec(),
                          n_contracts=2):
    """Simulate a price path and emit tick files plus a roll calendar.

    One tick at the session open anchors each day and one tick closes each
    bar, so ingestion reproduces the simulated return grid exactly.  The
    sample is split across ``n_contracts`` consecutive contracts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = simulate(params, SimConfig(n_days=n_days, seed=seed, n_replicas=1,
                                     burn_in_days=60,
                                     intervals_per_day=session.bars_per_day))
    rets = sim.returns[0]
    days = _trading_days(start, n_days)
    per = (n_days + n_contracts - 1) // n_contracts
    bounds = [days[min((i + 1) * per, n_days) - 1] for i in range(n_contracts)]
    calendar_rows = [(f"SYNZ{i:02d}", bounds[i]) for i in range(n_contracts)]

    m = session.bars_per_day
    open_dt = session.open_time
    log_price = math.log(start_price)
    paths = []
    handles = {}
    try:
        for name, _ in calendar_rows:
            p = out / f"ticks_{name}.csv"
            handles[name] = open(p, "w", encoding="utf-8")
            handles[name].write("timestamp,price,volume,contract\n")
            paths.append(p)
        for d_idx, day in enumerate(days):
            contract = next(name for name, last in calendar_rows if day <= last)
            fh = handles[contract]
            anchor = datetime.combine(day, open_dt)
            fh.write(f"{anchor.isoformat()},{math.exp(log_price):.10f},1,{contract}\n")
            for j in range(m):
                log_price += rets[d_idx, j]
                ts = anchor + timedelta(minutes=session.bar_minutes * (j + 1),
                                        seconds=-1)
                fh.write(f"{ts.isoformat()},{math.exp(log_price):.10f},1,{contract}\n")
    finally:
        for fh in handles.values():
            fh.close()
    cal_path = out / "calendar.csv"
    with open(cal_path, "w", encoding="utf-8") as fh:
        fh.write("contract,last_date\n")
        for name, last in calendar_rows:
            fh.write(f"{name},{last.isoformat()}\n")
    return paths, cal_path


def write_synthetic_quotes(out_path, measures, bars, params, premia,
                           n_quotes=40, seed=3, config=PricerConfig(),
                           factor_split=(0.5, 0.5)):
    """Price a spread of strikes/maturities at known premia and save quotes.

    States follow the pipeline convention: the day's continuous variance is
    split between the factors by ``factor_split``.
    """
    qp = risk_neutralize(params, premia)
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 1],
                                                            dtype=np.uint64)))
    n_days = len(measures.dates)
    usable = np.arange(30, n_days)
    rows = []
    taus = (20.0, 45.0, 75.0, 120.0, 200.0)
    moneyness = (0.8, 0.9, 1.0, 1.1, 1.25)
    while len(rows) < n_quotes:
        i = int(rng.choice(usable))
        forward = math.exp(bars.log_close[i])
        tau = float(rng.choice(taus))
        mny = float(rng.choice(moneyness))
        strike = round(mny * forward, 2)
        kind = "put" if mny < 1.0 else "call"
        chat = measures.c[i]
        state = (math.log(forward), factor_split[0] * chat,
                 factor_split[1] * chat)
        price = fourier_price(kind, strike, tau, state, qp, config)
        if price <= 1e-10 * forward:
            continue
        rows.append((str(measures.dates[i])[:10], kind, strike, forward,
                     tau, price))
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("date,type,K,F,tau_days,price\n")
        for row in rows:
            fh.write(f"{row[0]},{row[1]},{row[2]:.6f},{row[3]:.6f},"
                     f"{row[4]:.1f},{row[5]:.10f}\n")
    return out_path
