"""Command-line interface.

One verb per pipeline stage plus ``run`` for the whole chain, ``synth`` for
the synthetic fixture, and ``bench`` for the backend benchmark.  Errors
exit nonzero with a stage-tagged message on stderr.
"""

import argparse
import glob
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (CalibrateConfig, EstimateConfig, PipelineConfig,
                     PricerConfig, SessionSpec, SimConfig, ThresholdConfig)
from .errors import CarbonVolError


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args) or 0
    except CarbonVolError as exc:
        print(f"[{args.command}] error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"[{args.command}] missing file: {exc}", file=sys.stderr)
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="carbonvol",
        description="carbon futures volatility estimation and option pricing")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="ticks -> intraday bars")
    p.add_argument("--ticks", required=True, help="glob of tick CSV files")
    p.add_argument("--calendar", required=True, help="roll calendar CSV")
    p.add_argument("--bar-minutes", type=int, default=5)
    p.add_argument("--session", default="07:00-17:00")
    p.add_argument("--contract-filter", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("rv", help="bars -> daily realized measures")
    p.add_argument("--bars", required=True)
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--ctau", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rv)

    p = sub.add_parser("har", help="fit a volatility regression")
    p.add_argument("--measures", required=True)
    p.add_argument("--model", default="lhar-cj",
                   choices=["har", "lhar", "lhar-cj", "ar22"])
    p.add_argument("--h", type=int, default=1)
    p.add_argument("--oos-from", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_har)

    p = sub.add_parser("simulate", help="simulate the structural model")
    p.add_argument("--params", required=True, help="params JSON file")
    p.add_argument("--days", type=int, default=1283)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--substeps", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="indirect inference estimation")
    p.add_argument("--measures", required=True)
    p.add_argument("--model", default="2svj", choices=["2sv", "2svj"])
    p.add_argument("--replicas", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("calibrate", help="calibrate risk premia to quotes")
    p.add_argument("--iiresult", required=True)
    p.add_argument("--quotes", required=True)
    p.add_argument("--measures", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("price", help="price one option")
    p.add_argument("--premia", required=True, help="premia JSON file")
    p.add_argument("--quote", required=True,
                   help='e.g. "C,K=30,F=28,tau=90d"')
    p.add_argument("--v1", type=float, default=None)
    p.add_argument("--v2", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("report", help="build report from run artifacts")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the full pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--stages", default=None,
                   help="comma-separated subset of stages")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="write a synthetic tick/quote fixture")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--days", type=int, default=400)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="benchmark compiled vs numpy kernels")
    p.add_argument("--repeat", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def cmd_ingest(args):
    from .ingest import RollCalendar, ingest
    session = SessionSpec.parse(args.session, args.bar_minutes)
    paths = sorted(glob.glob(args.ticks))
    if not paths:
        raise CarbonVolError(f"no tick files match {args.ticks!r}")
    calendar = RollCalendar.from_csv(args.calendar)
    panel, errors, skipped = ingest(paths, calendar,
                                    contract_filter=args.contract_filter,
                                    session=session)
    daily = panel.to_csv(args.out)
    for err in errors:
        print(f"row {err.line}: {err.reason}", file=sys.stderr)
    for day in skipped:
        print(f"skipped zero-trade day {day}", file=sys.stderr)
    print(f"wrote {args.out} and {daily}: {len(panel)} days x {panel.m} bars, "
          f"{len(errors)} row errors")


def cmd_rv(args):
    from .ingest import BarPanel
    from .measures import clean_continuous, measure_panel, rescale_to_close
    config = ThresholdConfig(alpha=args.alpha, c_tau=args.ctau)
    bars = BarPanel.from_csv(args.bars)
    panel = measure_panel(bars.returns, bars.r, dates=bars.dates, config=config)
    panel = rescale_to_close(panel)
    panel, n_cleaned = clean_continuous(panel, config)
    panel.to_csv(args.out)
    meta = {"rescale_k": panel.rescale_k, "n_cleaned": n_cleaned,
            "alpha": config.alpha, "c_tau": config.c_tau}
    Path(args.out).with_suffix(".meta.json").write_text(
        json.dumps(meta, indent=1))
    jump_days = int((panel.n_jumps > 0).sum())
    print(f"wrote {args.out}: {len(panel)} days, {jump_days} jump days, "
          f"rescale k={panel.rescale_k:.4f}, {n_cleaned} cleaned")


def cmd_har(args):
    from .har import HarSpec, build_design, fit, forecast_oos, in_sample_metrics
    from .measures import MeasuresPanel, aggregate
    panel = MeasuresPanel.from_csv(args.measures)
    agg = aggregate(panel, percentage=True)
    spec = HarSpec(kind=args.model, h=args.h)
    fitted = fit(agg, spec)
    y, X, names, _ = build_design(agg, spec)
    metrics = in_sample_metrics(fitted, X, y)
    out = {"model": args.model, "h": args.h, "fit": fitted.to_dict(),
           "in_sample": metrics.to_dict()}
    if args.oos_from:
        out["out_of_sample"] = forecast_oos(agg, spec, args.oos_from).to_dict()
    from .pipeline import dump_json
    dump_json(args.out, out)
    tline = ", ".join(f"{n}={c:.3f}" for n, c in zip(names, fitted.coef)
                      if not n.startswith("phi"))
    print(f"wrote {args.out}: {tline}")


def cmd_simulate(args):
    from .simulate import StructuralParams, simulate
    params = StructuralParams.from_dict(
        json.loads(Path(args.params).read_text()))
    config = SimConfig(n_days=args.days, n_replicas=args.replicas,
                       seed=args.seed, substeps=args.substeps)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = simulate(params, config)
    np.savez_compressed(out_dir / "paths.npz", returns=sim.returns,
                        true_iv=sim.true_iv, true_jump_var=sim.true_jump_var,
                        true_jump_count=sim.true_jump_count)
    summary = {"n_replicas": sim.n_replicas, "n_days": args.days,
               "seed": args.seed,
               "mean_daily_rv": float((sim.returns ** 2).sum(axis=2).mean()),
               "mean_jumps_per_day": float(sim.true_jump_count.mean())}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1))
    print(f"wrote {out_dir}/paths.npz: {sim.n_replicas} replicas x "
          f"{args.days} days")


def cmd_estimate(args):
    from .indirect import build_problem, estimate
    from .measures import MeasuresPanel
    panel = MeasuresPanel.from_csv(args.measures)
    est = EstimateConfig(n_replicas=args.replicas)
    problem = build_problem(panel, args.model, seed=args.seed, est=est)
    result = estimate(problem)
    from .pipeline import dump_json
    dump_json(args.out, result.to_dict())
    pline = ", ".join(f"{n}={v:.4g}" for n, v in
                      zip(result.free_names, result.theta))
    print(f"wrote {args.out}: {pline}, chi2={result.chi2:.3e}")


def cmd_calibrate(args):
    from .indirect import IIResult
    from .pipeline import load_quotes, variance_states
    from .measures import MeasuresPanel
    from .pricing import calibrate_premia, rmse_iv, rmse_iv_cross
    result = IIResult.from_dict(json.loads(Path(args.iiresult).read_text()))
    panel = MeasuresPanel.from_csv(args.measures)
    quotes = load_quotes(args.quotes)
    states = variance_states(panel)
    pricer = PricerConfig()
    premia, f_obj = calibrate_premia(quotes, result.params, states,
                                     config=pricer)
    payload = {"model": result.model, "premia": premia.to_dict(),
               "f_obj": f_obj, "f_obj_units": "natural IV units",
               "n_quotes": len(quotes), "params": result.params.to_dict(),
               "rmse_iv": {
                   "moneyness": rmse_iv(quotes, premia, result.params,
                                        states, config=pricer),
                   "maturity": rmse_iv(quotes, premia, result.params, states,
                                       config=pricer, by="maturity"),
                   "cross": rmse_iv_cross(quotes, premia, result.params,
                                          states, config=pricer)}}
    from .pipeline import dump_json
    dump_json(args.out, payload)
    print(f"wrote {args.out}: phi={premia.phi:.4g} psi1={premia.psi1:.4g} "
          f"psi2={premia.psi2:.4g} f_obj={f_obj:.4f}")


def parse_quote(text):
    """Parse 'C,K=30,F=28,tau=90d' into (kind, strike, forward, tau_days)."""
    parts = [p.strip() for p in text.split(",")]
    kind = {"c": "call", "p": "put"}.get(parts[0].lower()[:1])
    if kind is None:
        raise CarbonVolError(f"quote must start with C or P: {text!r}")
    fields = {}
    for part in parts[1:]:
        key, _, value = part.partition("=")
        fields[key.strip().lower()] = value.strip()
    try:
        strike = float(fields["k"])
        forward = float(fields["f"])
        tau = fields["tau"]
        tau_days = float(tau[:-1]) if tau.endswith("d") else float(tau)
    except (KeyError, ValueError) as exc:
        raise CarbonVolError(f"bad quote {text!r}: {exc}")
    return kind, strike, forward, tau_days


def cmd_price(args):
    from .pricing import (OptionQuote, RiskPremia, fourier_price, model_iv,
                          risk_neutralize)
    from .simulate import StructuralParams
    payload = json.loads(Path(args.premia).read_text())
    params = StructuralParams.from_dict(payload["params"])
    premia = RiskPremia(**payload["premia"])
    qp = risk_neutralize(params, premia)
    kind, strike, forward, tau_days = parse_quote(args.quote)
    v1 = args.v1 if args.v1 is not None else qp.omega1
    v2 = args.v2 if args.v2 is not None else qp.omega2
    state = (math.log(forward), v1, v2)
    price = fourier_price(kind, strike, tau_days, state, qp)
    quote = OptionQuote(kind=kind, strike=strike, forward=forward,
                        tau_days=tau_days)
    iv = model_iv(quote, qp, state)
    line = json.dumps({"kind": kind, "K": strike, "F": forward,
                       "tau_days": tau_days, "price": price,
                       "iv_annual": iv, "v1": v1, "v2": v2})
    if args.out == "-":
        print(line)
    else:
        Path(args.out).write_text(line + "\n")


def cmd_report(args):
    from .pipeline import PipelineRun
    config = PipelineConfig(out_dir=args.out_dir)
    run = PipelineRun(config, out_dir=args.out_dir)
    run._stage_report()
    print(f"wrote {run.path('report.json')} and {run.path('report.txt')}")


def cmd_run(args):
    from .pipeline import run_pipeline
    config = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out_dir:
        config.out_dir = args.out_dir
    stages = args.stages.split(",") if args.stages else None
    manifest = run_pipeline(config, stages=stages)
    done = [s["stage"] for s in manifest["stages"]]
    print(f"pipeline finished: {', '.join(done)} -> {config.out_dir}")


def cmd_synth(args):
    from .synthetic import write_synthetic_ticks
    paths, cal = write_synthetic_ticks(args.out_dir, n_days=args.days,
                                       seed=args.seed)
    print(f"wrote {len(paths)} tick files and {cal}")


def cmd_bench(args):
    from .benchmark import run_benchmark
    run_benchmark(repeat=args.repeat)


if __name__ == "__main__":
    sys.exit(main())
