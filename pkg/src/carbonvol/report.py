"""Report generation: machine-readable JSON plus human-readable tables.

The report mirrors the analysis sequence: descriptive statistics, the
volatility-regression comparison with t-statistics in parentheses, in- and
out-of-sample metrics, structural estimates with targeted parameters in
brackets and implied auxiliary coefficients, calibrated premia, and the
bucketed pricing-error tables.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd

import jsonschema

from .config import TRADING_DAYS_PER_YEAR
from .measures import MeasuresPanel

REPORT_SCHEMA = {
    "type": "object",
    "required": ["version", "sections"],
    "properties": {
        "version": {"type": "string"},
        "sections": {
            "type": "object",
            "properties": {
                "descriptive": {"type": "object"},
                "har": {"type": "object"},
                "estimate": {"type": "object"},
                "premia": {"type": "object"},
                "notices": {"type": "array", "items": {"type": "string"}},
            },
        },
    },
}


def validate_report(report):
    jsonschema.validate(report, REPORT_SCHEMA)
    return True


def _descriptive(out_dir):
    daily_path = Path(out_dir) / "bars_daily.csv"
    bars_path = Path(out_dir) / "bars.csv"
    if not daily_path.exists() or not bars_path.exists():
        return None
    daily = pd.read_csv(daily_path)
    bars = pd.read_csv(bars_path)
    prices = np.exp(daily["log_close"].to_numpy(float))
    rets = bars["log_return"].to_numpy(float) * 100.0

    def stats(x):
        x = x[np.isfinite(x)]
        mean = float(np.mean(x))
        std = float(np.std(x, ddof=1))
        zs = (x - mean) / std if std > 0 else x * 0.0
        return {"mean": mean, "std": std,
                "min": float(np.min(x)), "max": float(np.max(x)),
                "skewness": float(np.mean(zs ** 3)),
                "kurtosis": float(np.mean(zs ** 4) - 3.0)}

    return {"futures_prices": stats(prices),
            "intraday_log_returns_pct": stats(rets),
            "n_days": int(len(daily))}


def _measures_summary(out_dir):
    path = Path(out_dir) / "measures.csv"
    if not path.exists():
        return None
    panel = MeasuresPanel.from_csv(path)
    vp = panel.vhat * 1e4
    ann_vol = float(np.sqrt(np.mean(vp) * TRADING_DAYS_PER_YEAR / 1e4) * 100)
    return {"mean_rv_pct": float(np.mean(vp)),
            "mean_c_pct": float(np.mean(panel.c * 1e4)),
            "mean_j_pct": float(np.mean(panel.j * 1e4)),
            "jump_day_share": float(np.mean(panel.n_jumps > 0)),
            "mean_jumps_per_day": float(np.mean(panel.n_jumps)),
            "annualized_vol_pct": ann_vol,
            "n_days": len(panel)}


def _load_json(out_dir, name):
    path = Path(out_dir) / name
    if path.exists():
        return json.loads(path.read_text())
    return None


def build_report(out_dir, config=None):
    """Assemble the report from whatever artifacts exist in ``out_dir``."""
    from . import __version__
    sections = {}
    notices = []
    desc = _descriptive(out_dir)
    if desc:
        sections["descriptive"] = desc
    meas = _measures_summary(out_dir)
    if meas:
        sections["measures"] = meas
    har = _load_json(out_dir, "har_fits.json")
    if har:
        sections["har"] = har
    ii = _load_json(out_dir, "iiresult.json")
    if ii:
        sections["estimate"] = ii
    premia = _load_json(out_dir, "premia.json")
    if premia:
        sections["premia"] = premia
    else:
        notices.append("option calibration not run (no quotes provided); "
                       "premia tables omitted")
    sections["notices"] = notices
    return {"version": __version__, "sections": sections}


def _fmt(x, digits=3):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "-"
    if isinstance(x, float):
        if x != 0 and (abs(x) < 10 ** -digits or abs(x) >= 10 ** 6):
            return f"{x:.2e}"
        return f"{x:.{digits}f}"
    return str(x)


def _har_table(har):
    kinds = [k for k in ("har", "lhar", "lhar-cj", "ar22") if k in har]
    rows = []
    all_names = []
    for kind in kinds:
        for name in har[kind]["fit"]["names"]:
            if name not in all_names and not name.startswith("phi"):
                all_names.append(name)
    lines = ["Volatility regressions (t-statistics in parentheses)",
             "-" * 60]
    header = f"{'':<10}" + "".join(f"{k:>12}" for k in kinds)
    lines.append(header)
    for name in all_names:
        vals, tstats = [], []
        for kind in kinds:
            f = har[kind]["fit"]
            if name in f["names"]:
                i = f["names"].index(name)
                coef = f["coef"][i]
                se = np.sqrt(f["cov"][i][i])
                vals.append(f"{coef:.3f}")
                tstats.append(f"({coef / se:.3f})" if se > 0 else "(-)")
            else:
                vals.append("")
                tstats.append("")
        lines.append(f"{name:<10}" + "".join(f"{v:>12}" for v in vals))
        lines.append(f"{'':<10}" + "".join(f"{t:>12}" for t in tstats))
    lines.append("")
    lines.append(f"{'metric':<10}" + "".join(f"{k:>12}" for k in kinds))
    for metric in ("aic", "bic", "adj_r2"):
        row = [_fmt(har[k]["in_sample"].get(metric), 3) for k in kinds]
        lines.append(f"{metric:<10}" + "".join(f"{v:>12}" for v in row))
    if any("out_of_sample" in har[k] for k in kinds):
        for metric in ("mse", "mae", "mz_r2", "qlike"):
            row = [_fmt(har[k].get("out_of_sample", {}).get(metric), 4)
                   for k in kinds]
            lines.append(f"oos_{metric:<6}" + "".join(f"{v:>12}" for v in row))
    return lines


def _estimate_table(ii):
    lines = ["Structural estimation (targeted parameters in brackets)",
             "-" * 60]
    se = dict(zip(ii["free_names"], ii["se"]))
    theta = dict(zip(ii["free_names"], ii["theta"]))
    for name in ii["free_names"]:
        lines.append(f"{name:<12}{_fmt(theta[name], 5):>12}   "
                     f"(se {_fmt(se[name], 5)})")
    for name, value in ii["targeted"].items():
        lines.append(f"[{name}]{'':<{10 - len(name)}}{_fmt(value, 5):>12}")
    lines.append(f"{'chi2':<12}{_fmt(ii['chi2'], 6):>12}")
    lines.append("")
    lines.append("Auxiliary coefficients    estimated     implied")
    for name, est, imp in zip(ii["aux_names"], ii["data_coef"],
                              ii["implied_coef"]):
        lines.append(f"  {name:<22}{_fmt(est, 4):>11} {_fmt(imp, 4):>11}")
    lines.append(f"  {'resid_var':<22}{_fmt(ii['data_resid_var'], 4):>11} "
                 f"{_fmt(ii['implied_resid_var'], 4):>11}")
    return lines


def _premia_table(premia):
    lines = ["Calibrated risk premia", "-" * 60]
    for name in ("phi", "psi1", "psi2"):
        lines.append(f"{name:<8}{_fmt(premia['premia'][name], 6):>14}")
    lines.append(f"{'f_obj':<8}{_fmt(premia['f_obj'], 4):>14}  "
                 f"({premia.get('f_obj_units', '')}, "
                 f"{premia.get('n_quotes', '?')} quotes)")
    lines.append("")
    lines.append("RMSE_IV x100 by moneyness")
    for label, cell in premia["rmse_iv"]["moneyness"].items():
        lines.append(f"  {label:<22}{cell['rmse_iv']:>8.2f}  (n={cell['count']})")
    lines.append("RMSE_IV x100 by maturity")
    for label, cell in premia["rmse_iv"]["maturity"].items():
        lines.append(f"  {label:<22}{cell['rmse_iv']:>8.2f}  (n={cell['count']})")
    cross = premia["rmse_iv"].get("cross", {})
    if cross:
        lines.append("RMSE_IV x100 by moneyness x maturity")
        for mlabel, row in cross.items():
            for tlabel, cell in row.items():
                lines.append(f"  {mlabel:<20} {tlabel:<18}"
                             f"{cell['rmse_iv']:>8.2f}  (n={cell['count']})")
    return lines


def render_text(report):
    """Plain-text rendering of the JSON report."""
    sections = report["sections"]
    lines = [f"carbonvol report (v{report['version']})", "=" * 60]
    if "descriptive" in sections:
        d = sections["descriptive"]
        lines += ["", "Descriptive statistics", "-" * 60,
                  f"{'':<10}{'prices':>12}{'returns(%)':>12}"]
        for key in ("mean", "std", "min", "max", "skewness", "kurtosis"):
            lines.append(
                f"{key:<10}"
                f"{_fmt(d['futures_prices'][key], 2):>12}"
                f"{_fmt(d['intraday_log_returns_pct'][key], 2):>12}")
    if "measures" in sections:
        m = sections["measures"]
        lines += ["", "Realized measures (daily percentage units)", "-" * 60]
        for key, value in m.items():
            lines.append(f"{key:<22}{_fmt(value, 3):>12}")
    if "har" in sections:
        lines += [""] + _har_table(sections["har"])
    if "estimate" in sections:
        lines += [""] + _estimate_table(sections["estimate"])
    if "premia" in sections:
        lines += [""] + _premia_table(sections["premia"])
    for notice in sections.get("notices", []):
        lines += ["", f"NOTE: {notice}"]
    return "\n".join(lines) + "\n"
