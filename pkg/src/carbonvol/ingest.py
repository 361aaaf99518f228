"""Tick-data ingestion: parse, roll across contracts, sample to bars.

Raw trades arrive as delimited text with a header-driven column map.  The
roll calendar assigns exactly one contract per trading day; intraday bars
use last-trade-price sampling with previous-close carry-forward, and the
day's first observed price anchors the first return so a day's returns sum
exactly to close minus open.  The cross-contract overnight return is never
part of the close-to-close series.
"""

from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta

import numpy as np
import pandas as pd

from .config import SessionSpec
from .errors import CalendarGapError, EmptyDataError, IngestError


@dataclass(frozen=True)
class TickRecord:
    """One trade: UTC timestamp, price, size, contract identifier."""

    timestamp: datetime
    price: float
    volume: float
    contract: str


@dataclass(frozen=True)
class RowError:
    """A rejected input row with its 1-based line number."""

    line: int
    reason: str


@dataclass(frozen=True)
class ColumnMap:
    """Header names of the tick fields in the input file."""

    timestamp: str = "timestamp"
    price: str = "price"
    volume: str = "volume"
    contract: str = "contract"


def load_ticks(path, contract_filter=None, columns=ColumnMap(),
               session=SessionSpec(), delimiter=","):
    """Parse a delimited tick file.

    Returns (records sorted by timestamp, row errors).  Malformed rows are
    collected, not fatal; an empty result raises.  Trades outside the
    session [open, close) are dropped silently (they are well-formed).
    """
    records = []
    errors = []
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n")
        if not header:
            raise EmptyDataError(f"{path}: empty file")
        names = [h.strip() for h in header.split(delimiter)]
        try:
            idx = {f: names.index(getattr(columns, f))
                   for f in ("timestamp", "price", "volume", "contract")}
        except ValueError as exc:
            raise IngestError(f"{path}: missing column ({exc})")
        for lineno, line in enumerate(handle, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(delimiter)
            try:
                ts = datetime.fromisoformat(parts[idx["timestamp"]].strip())
                price = float(parts[idx["price"]])
                volume = float(parts[idx["volume"]])
                contract = parts[idx["contract"]].strip()
                if price <= 0.0:
                    raise ValueError(f"non-positive price {price}")
            except (ValueError, IndexError) as exc:
                errors.append(RowError(lineno, str(exc)))
                continue
            if contract_filter and contract_filter not in contract:
                continue
            if not _in_session(ts.time(), session):
                continue
            records.append(TickRecord(ts, price, volume, contract))
    if not records:
        raise EmptyDataError(f"{path}: no usable in-session records"
                             + (f" for filter {contract_filter!r}"
                                if contract_filter else ""))
    records.sort(key=lambda rec: rec.timestamp)
    return records, errors


def _in_session(t, session):
    return session.open_time <= t < session.close_time


@dataclass(frozen=True)
class RollCalendar:
    """Ordered (contract, last inclusion date) pairs."""

    entries: tuple

    def __post_init__(self):
        dates = [d for _, d in self.entries]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise IngestError("calendar last-inclusion dates must be "
                              "strictly increasing")

    def contract_for(self, day):
        for contract, last in self.entries:
            if day <= last:
                return contract
        return None

    @classmethod
    def from_pairs(cls, pairs):
        out = []
        for contract, d in pairs:
            if isinstance(d, str):
                d = date.fromisoformat(d)
            out.append((str(contract), d))
        return cls(tuple(out))

    @classmethod
    def from_csv(cls, path):
        df = pd.read_csv(path)
        need = {"contract", "last_date"}
        if not need.issubset(df.columns):
            raise IngestError(f"{path}: calendar needs columns {sorted(need)}")
        return cls.from_pairs(zip(df["contract"], df["last_date"]))

    @classmethod
    def from_expiries(cls, pairs):
        """Roll the (trading) day before expiry: the new contract takes over
        on that switch day, so the old contract's last inclusion day is the
        trading day before the switch."""
        def prev_weekday(d):
            d -= timedelta(days=1)
            while d.weekday() >= 5:
                d -= timedelta(days=1)
            return d

        out = []
        for contract, expiry in pairs:
            if isinstance(expiry, str):
                expiry = date.fromisoformat(expiry)
            switch = prev_weekday(expiry)
            out.append((contract, prev_weekday(switch)))
        return cls.from_pairs(out)

    def to_csv(self, path):
        pd.DataFrame(self.entries, columns=["contract", "last_date"]
                     ).to_csv(path, index=False)


def roll_series(ticks_by_contract, calendar):
    """Stitch per-contract ticks into one series, one contract per day.

    Days whose trades belong to no calendar contract raise, naming the
    dates.  No price back-adjustment is applied.
    """
    rolled = []
    uncovered = set()
    for contract, ticks in ticks_by_contract.items():
        for rec in ticks:
            day = rec.timestamp.date()
            assigned = calendar.contract_for(day)
            if assigned is None:
                uncovered.add(day)
            elif assigned == rec.contract:
                rolled.append(rec)
    if uncovered:
        raise CalendarGapError(sorted(uncovered))
    rolled.sort(key=lambda rec: rec.timestamp)
    if not rolled:
        raise EmptyDataError("no ticks survived the roll")
    return rolled


@dataclass
class BarPanel:
    """Per-day intraday return grid plus daily summary columns."""

    dates: np.ndarray           # datetime64[D]
    returns: np.ndarray         # (n_days, m) intraday log-returns
    log_open: np.ndarray        # log of the day's first observed price
    log_close: np.ndarray
    contract: np.ndarray
    n_trades: np.ndarray
    low_liquidity: np.ndarray
    r: np.ndarray = None        # close-to-close log return; nan at breaks

    def __post_init__(self):
        if self.r is None:
            self.r = daily_returns_array(self)

    @property
    def m(self):
        return self.returns.shape[1]

    def __len__(self):
        return len(self.dates)

    def to_csv(self, path, daily_path=None):
        n, m = self.returns.shape
        df = pd.DataFrame({
            "date": np.repeat(self.dates, m),
            "interval": np.tile(np.arange(1, m + 1), n),
            "log_return": self.returns.ravel(),
        })
        df.to_csv(path, index=False)
        daily = pd.DataFrame({
            "date": self.dates,
            "contract": self.contract,
            "log_open": self.log_open,
            "log_close": self.log_close,
            "r": self.r,
            "n_trades": self.n_trades,
            "low_liquidity": self.low_liquidity.astype(int),
        })
        daily_path = daily_path or _daily_path(path)
        daily.to_csv(daily_path, index=False)
        return daily_path

    @classmethod
    def from_csv(cls, path, daily_path=None):
        df = pd.read_csv(path, parse_dates=["date"])
        daily = pd.read_csv(daily_path or _daily_path(path),
                            parse_dates=["date"])
        m = int(df["interval"].max())
        n = len(daily)
        returns = df["log_return"].to_numpy(float).reshape(n, m)
        return cls(dates=daily["date"].to_numpy(dtype="datetime64[D]"),
                   returns=returns,
                   log_open=daily["log_open"].to_numpy(float),
                   log_close=daily["log_close"].to_numpy(float),
                   contract=daily["contract"].to_numpy(),
                   n_trades=daily["n_trades"].to_numpy(int),
                   low_liquidity=daily["low_liquidity"].to_numpy(bool),
                   r=daily["r"].to_numpy(float))


def _daily_path(path):
    from pathlib import Path
    p = Path(path)
    return p.with_name(p.stem + "_daily" + p.suffix)


def to_bars(ticks, session=SessionSpec(), skipped_days=None):
    """Sample rolled ticks onto the intraday grid.

    Last trade price per interval; empty intervals carry the previous close
    (zero return); the first return is anchored at the day's first observed
    price.  Zero-trade days are omitted (and reported via ``skipped_days``);
    one-trade days are flagged low-liquidity.
    """
    m = session.bars_per_day
    open_minutes = session.open_time.hour * 60 + session.open_time.minute
    by_day = {}
    for rec in ticks:
        by_day.setdefault(rec.timestamp.date(), []).append(rec)

    dates, grids, opens, closes, contracts, counts, flags = \
        [], [], [], [], [], [], []
    for day in sorted(by_day):
        recs = by_day[day]
        if not recs:
            if skipped_days is not None:
                skipped_days.append(day)
            continue
        last_in_bar = np.full(m, np.nan)
        for rec in recs:
            t = rec.timestamp.time()
            minutes = (t.hour * 60 + t.minute + t.second / 60.0
                       + t.microsecond / 6e7) - open_minutes
            bar = min(int(minutes // session.bar_minutes), m - 1)
            last_in_bar[bar] = rec.price
        first_price = recs[0].price
        closes_grid = np.empty(m)
        prev = first_price
        for j in range(m):
            if np.isfinite(last_in_bar[j]):
                prev = last_in_bar[j]
            closes_grid[j] = prev
        log_grid = np.log(closes_grid)
        anchor = np.log(first_price)
        rets = np.diff(np.concatenate([[anchor], log_grid]))
        dates.append(np.datetime64(day, "D"))
        grids.append(rets)
        opens.append(anchor)
        closes.append(log_grid[-1])
        contracts.append(recs[0].contract)
        counts.append(len(recs))
        flags.append(len(recs) <= 1)
    if not dates:
        raise EmptyDataError("no days with trades")
    return BarPanel(dates=np.array(dates),
                    returns=np.vstack(grids),
                    log_open=np.array(opens),
                    log_close=np.array(closes),
                    contract=np.array(contracts),
                    n_trades=np.array(counts),
                    low_liquidity=np.array(flags))


def daily_returns_array(panel):
    """Close-to-close log returns; the roll-boundary return is excluded."""
    n = len(panel.dates)
    r = np.full(n, np.nan)
    for t in range(1, n):
        if panel.contract[t] == panel.contract[t - 1]:
            r[t] = panel.log_close[t] - panel.log_close[t - 1]
    return r


def daily_returns(panel):
    """(date, r) pairs for days with a defined close-to-close return."""
    if len(panel) < 2:
        raise IngestError("need at least two days for daily returns")
    r = panel.r
    mask = np.isfinite(r)
    return list(zip(panel.dates[mask], r[mask]))


def ingest(tick_paths, calendar, contract_filter=None, columns=ColumnMap(),
           session=SessionSpec()):
    """Full ingestion: parse all files, roll, sample to bars.

    Returns (BarPanel, row errors, skipped zero-trade days).
    """
    by_contract = {}
    errors = []
    for path in tick_paths:
        recs, errs = load_ticks(path, contract_filter, columns, session)
        errors.extend(errs)
        for rec in recs:
            by_contract.setdefault(rec.contract, []).append(rec)
    rolled = roll_series(by_contract, calendar)
    skipped = []
    panel = to_bars(rolled, session, skipped_days=skipped)
    return panel, errors, skipped
