"""Batch pipeline: stage orchestration with a reproducible run manifest.

Stages read their predecessors' persisted artifacts from the output
directory and write flat CSV/JSON files.  The manifest records input and
output hashes plus the config snapshot; re-running a completed stage with
unchanged inputs and config is a no-op.
"""

import glob
import hashlib
import json
import math
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import (EstimateConfig, PipelineConfig, PricerConfig,
                     SessionSpec, SimConfig, ThresholdConfig)
from .errors import PipelineError
from .har import HarSpec, build_design, fit, forecast_oos, in_sample_metrics
from .indirect import build_problem, estimate
from .ingest import BarPanel, ColumnMap, RollCalendar, ingest
from .measures import (MeasuresPanel, aggregate, clean_continuous,
                       measure_panel, rescale_to_close)
from .pricing import (OptionQuote, RiskPremia, calibrate_premia, market_iv,
                      risk_neutralize, rmse_iv, rmse_iv_cross)
from .simulate import StructuralParams
from .indirect import IIResult

STAGE_ORDER = ("ingest", "rv", "har", "estimate", "calibrate", "report")


def json_default(obj):
    """Serialize numpy scalars/arrays and dates that leak into payloads."""
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def dump_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True,
                                     default=json_default))


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(section):
    return hashlib.sha256(json.dumps(section, sort_keys=True,
                                     default=str).encode()).hexdigest()[:16]


def _utcnow():
    return datetime.now(timezone.utc).isoformat()


class PipelineRun:
    """Executes stages in dependency order and maintains the manifest."""

    def __init__(self, config, out_dir=None):
        self.config = config
        self.out = Path(out_dir or config.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = {"version": __version__, "started": _utcnow(),
                         "config": config.to_dict(), "stages": []}
        self._previous = self._load_previous()

    def _load_previous(self):
        if self.manifest_path.exists():
            try:
                return json.loads(self.manifest_path.read_text())
            except json.JSONDecodeError:
                return None
        return None

    def path(self, name):
        return self.out / name

    # --- stage definitions -------------------------------------------

    def stage_io(self, stage):
        p = self.path
        table = {
            "ingest": (self._tick_inputs(), [p("bars.csv"), p("bars_daily.csv")]),
            "rv": ([p("bars.csv"), p("bars_daily.csv")],
                   [p("measures.csv"), p("measures_meta.json")]),
            "har": ([p("measures.csv")], [p("har_fits.json")]),
            "estimate": ([p("measures.csv")], [p("iiresult.json")]),
            "calibrate": ([p("iiresult.json"), p("measures.csv")]
                          + ([Path(self.config.quotes)]
                             if self.config.quotes else []),
                          [p("premia.json")]),
            "report": ([p("measures.csv")], [p("report.json"), p("report.txt")]),
        }
        return table[stage]

    def _tick_inputs(self):
        paths = sorted(glob.glob(self.config.ticks)) if self.config.ticks else []
        cal = [Path(self.config.calendar)] if self.config.calendar else []
        return [Path(x) for x in paths] + cal

    def run(self, stages=None):
        wanted = [s for s in STAGE_ORDER if stages is None or s in stages]
        if stages:
            unknown = set(stages) - set(STAGE_ORDER)
            if unknown:
                raise PipelineError(f"unknown stages: {sorted(unknown)}")
        try:
            for stage in wanted:
                self._run_stage(stage)
        finally:
            self.manifest["finished"] = _utcnow()
            self.manifest_path.write_text(
                json.dumps(self.manifest, indent=1, sort_keys=True))
        return self.manifest

    def _run_stage(self, stage):
        inputs, outputs = self.stage_io(stage)
        missing = [str(x) for x in inputs if not Path(x).exists()]
        if missing:
            raise PipelineError(f"[{stage}] missing inputs: {missing} "
                                "(run the upstream stage first)")
        in_hashes = {str(x): file_hash(x) for x in inputs}
        cfg_hash = _config_hash(self._stage_config(stage))
        record = {"stage": stage, "inputs": in_hashes, "config": cfg_hash,
                  "started": _utcnow()}
        if self._can_skip(stage, in_hashes, cfg_hash, outputs):
            record["status"] = "skipped"
            record["outputs"] = {str(x): file_hash(x) for x in outputs}
        else:
            getattr(self, f"_stage_{stage}")()
            record["status"] = "done"
            record["outputs"] = {str(x): file_hash(x) for x in outputs}
        record["finished"] = _utcnow()
        self.manifest["stages"].append(record)

    def _can_skip(self, stage, in_hashes, cfg_hash, outputs):
        if not self._previous:
            return False
        if not all(Path(x).exists() for x in outputs):
            return False
        for rec in self._previous.get("stages", []):
            if (rec.get("stage") == stage
                    and rec.get("inputs") == in_hashes
                    and rec.get("config") == cfg_hash
                    and rec.get("status") in ("done", "skipped")):
                current = {str(x): file_hash(x) for x in outputs}
                return current == rec.get("outputs")
        return False

    def _stage_config(self, stage):
        c = self.config
        base = {"seed": c.seed}
        if stage == "ingest":
            base.update(ticks=c.ticks, calendar=c.calendar, session=c.session,
                        bar_minutes=c.bar_minutes)
        elif stage == "rv":
            base.update(threshold=asdict(c.threshold))
        elif stage == "har":
            base.update(models=list(c.har_models), oos_from=c.oos_from)
        elif stage == "estimate":
            base.update(model=c.model, estimate=asdict(c.estimate),
                        threshold=asdict(c.threshold))
        elif stage == "calibrate":
            base.update(quotes=c.quotes, pricer=asdict(c.pricer),
                        calibrate=asdict(c.calibrate))
        return base

    # --- the stages themselves ---------------------------------------

    def _stage_ingest(self):
        c = self.config
        session = SessionSpec.parse(c.session, c.bar_minutes)
        paths = sorted(glob.glob(c.ticks))
        if not paths:
            raise PipelineError(f"[ingest] no tick files match {c.ticks!r}")
        calendar = RollCalendar.from_csv(c.calendar)
        panel, errors, skipped = ingest(paths, calendar, session=session)
        panel.to_csv(self.path("bars.csv"), self.path("bars_daily.csv"))
        meta = {"row_errors": [{"line": e.line, "reason": e.reason}
                               for e in errors],
                "skipped_days": [str(d) for d in skipped]}
        self.path("ingest_meta.json").write_text(json.dumps(meta, indent=1))

    def _stage_rv(self):
        c = self.config
        bars = BarPanel.from_csv(self.path("bars.csv"),
                                 self.path("bars_daily.csv"))
        panel = measure_panel(bars.returns, bars.r, dates=bars.dates,
                              config=c.threshold)
        panel = rescale_to_close(panel)
        panel, n_cleaned = clean_continuous(panel, c.threshold)
        panel.to_csv(self.path("measures.csv"))
        meta = {"rescale_k": panel.rescale_k, "n_cleaned": n_cleaned,
                "alpha": c.threshold.alpha, "c_tau": c.threshold.c_tau}
        self.path("measures_meta.json").write_text(json.dumps(meta, indent=1))

    def _stage_har(self):
        c = self.config
        panel = MeasuresPanel.from_csv(self.path("measures.csv"))
        agg = aggregate(panel, percentage=True)
        out = {}
        for kind in c.har_models:
            spec = HarSpec(kind=kind)
            fitted = fit(agg, spec)
            y, X, names, _ = build_design(agg, spec)
            metrics = in_sample_metrics(fitted, X, y)
            entry = {"fit": fitted.to_dict(), "in_sample": metrics.to_dict()}
            if c.oos_from:
                oos = forecast_oos(agg, spec, c.oos_from)
                entry["out_of_sample"] = oos.to_dict()
            out[kind] = entry
        dump_json(self.path("har_fits.json"), out)

    def _stage_estimate(self):
        c = self.config
        panel = MeasuresPanel.from_csv(self.path("measures.csv"))
        problem = build_problem(panel, c.model, seed=c.seed, est=c.estimate,
                                threshold=c.threshold)
        result = estimate(problem)
        dump_json(self.path("iiresult.json"), result.to_dict())

    def _stage_calibrate(self):
        c = self.config
        if not c.quotes:
            raise PipelineError("[calibrate] no quotes file configured")
        result = IIResult.from_dict(
            json.loads(self.path("iiresult.json").read_text()))
        panel = MeasuresPanel.from_csv(self.path("measures.csv"))
        quotes = load_quotes(c.quotes)
        states = variance_states(panel)
        premia, f_obj = calibrate_premia(quotes, result.params, states,
                                         config=c.pricer, calib=c.calibrate)
        tables = {
            "moneyness": rmse_iv(quotes, premia, result.params, states,
                                 config=c.pricer, by="moneyness"),
            "maturity": rmse_iv(quotes, premia, result.params, states,
                                config=c.pricer, by="maturity"),
            "cross": rmse_iv_cross(quotes, premia, result.params, states,
                                   config=c.pricer),
        }
        payload = {"model": result.model, "premia": premia.to_dict(),
                   "f_obj": f_obj, "f_obj_units": "natural IV units",
                   "n_quotes": len(quotes),
                   "params": result.params.to_dict(),
                   "rmse_iv": tables}
        dump_json(self.path("premia.json"), payload)

    def _stage_report(self):
        from .report import build_report, render_text
        report = build_report(self.out, self.config)
        dump_json(self.path("report.json"), report)
        self.path("report.txt").write_text(render_text(report))


def load_quotes(path):
    """quotes.csv columns: date, type, K, F, tau_days, price."""
    df = pd.read_csv(path)
    need = {"date", "type", "K", "F", "tau_days", "price"}
    if not need.issubset(df.columns):
        raise PipelineError(f"{path}: quotes need columns {sorted(need)}")
    quotes = []
    for _, row in df.iterrows():
        kind = {"c": "call", "p": "put"}.get(str(row["type"]).lower()[:1])
        if kind is None:
            raise PipelineError(f"bad option type {row['type']!r}")
        quotes.append(OptionQuote(kind=kind, strike=float(row["K"]),
                                  forward=float(row["F"]),
                                  tau_days=float(row["tau_days"]),
                                  price=float(row["price"]),
                                  date=str(row["date"])[:10]))
    return quotes


def variance_states(panel, factor_split=(0.5, 0.5)):
    """Per-date (v1, v2) from the day's continuous variance."""
    return {str(d)[:10]: (factor_split[0] * c, factor_split[1] * c)
            for d, c in zip(panel.dates, panel.c)}


def run_pipeline(config, stages=None, out_dir=None):
    """Execute the requested stages; returns the manifest dict."""
    return PipelineRun(config, out_dir=out_dir).run(stages)
