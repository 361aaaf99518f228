"""Tick parsing, rolling, bar sampling, and daily returns."""

import math
from datetime import date, datetime, time

import numpy as np
import pytest

from carbonvol.config import SessionSpec
from carbonvol.errors import CalendarGapError, EmptyDataError, IngestError
from carbonvol.ingest import (BarPanel, ColumnMap, RollCalendar, TickRecord,
                              daily_returns, ingest, load_ticks, roll_series,
                              to_bars)

SESSION = SessionSpec()


def write_ticks(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,price,volume,contract\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def tick(ts, price, contract="SYNZ00"):
    return TickRecord(datetime.fromisoformat(ts), price, 1.0, contract)


class TestLoadTicks:
    def test_malformed_rows_collected(self, tmp_path):
        path = tmp_path / "ticks.csv"
        write_ticks(path, [
            ("2019-01-02T08:00:00", 10.0, 1, "SYNZ00"),
            ("2019-01-02T08:05:00", "abc", 1, "SYNZ00"),
            ("2019-01-02T08:10:00", 10.2, 1, "SYNZ00"),
            ("2019-01-02T08:15:00", 10.1, 1, "SYNZ00"),
        ])
        records, errors = load_ticks(path)
        assert len(records) == 3
        assert len(errors) == 1
        assert errors[0].line == 3

    def test_non_positive_price_rejected(self, tmp_path):
        path = tmp_path / "ticks.csv"
        write_ticks(path, [
            ("2019-01-02T08:00:00", -5.0, 1, "SYNZ00"),
            ("2019-01-02T08:05:00", 10.0, 1, "SYNZ00"),
        ])
        records, errors = load_ticks(path)
        assert len(records) == 1
        assert "price" in errors[0].reason

    def test_session_boundary_open_inclusive_close_exclusive(self, tmp_path):
        path = tmp_path / "ticks.csv"
        write_ticks(path, [
            ("2019-01-02T06:59:00", 10.0, 1, "SYNZ00"),
            ("2019-01-02T07:00:00", 10.1, 1, "SYNZ00"),
            ("2019-01-02T16:59:59", 10.2, 1, "SYNZ00"),
            ("2019-01-02T17:00:00", 10.3, 1, "SYNZ00"),
        ])
        records, errors = load_ticks(path)
        assert [r.timestamp.time() for r in records] == [time(7, 0),
                                                         time(16, 59, 59)]
        assert not errors

    def test_empty_result_raises(self, tmp_path):
        path = tmp_path / "ticks.csv"
        write_ticks(path, [("2019-01-02T03:00:00", 10.0, 1, "SYNZ00")])
        with pytest.raises(EmptyDataError):
            load_ticks(path)

    def test_contract_filter(self, tmp_path):
        path = tmp_path / "ticks.csv"
        write_ticks(path, [
            ("2019-01-02T08:00:00", 10.0, 1, "SYNZ00"),
            ("2019-01-02T08:01:00", 11.0, 1, "OTHER"),
        ])
        records, _ = load_ticks(path, contract_filter="SYNZ")
        assert len(records) == 1
        assert records[0].contract == "SYNZ00"

    def test_custom_column_map(self, tmp_path):
        path = tmp_path / "ticks.csv"
        with open(path, "w") as fh:
            fh.write("ts,px,sz,sym\n2019-01-02T08:00:00,10.0,1,SYNZ00\n")
        records, _ = load_ticks(path, columns=ColumnMap(
            timestamp="ts", price="px", volume="sz", contract="sym"))
        assert records[0].price == 10.0


class TestRollCalendar:
    def test_dates_must_increase(self):
        with pytest.raises(IngestError):
            RollCalendar.from_pairs([("A", "2019-12-01"), ("B", "2019-11-01")])

    def test_roll_day_assignment(self):
        cal = RollCalendar.from_pairs([("A", "2019-06-30"),
                                       ("B", "2019-12-31")])
        assert cal.contract_for(date(2019, 6, 30)) == "A"
        assert cal.contract_for(date(2019, 7, 1)) == "B"
        assert cal.contract_for(date(2020, 1, 1)) is None

    def test_gap_day_raises_with_date(self):
        cal = RollCalendar.from_pairs([("A", "2019-06-30")])
        ticks = {"A": [tick("2019-06-28T08:00:00", 10.0, "A")],
                 "B": [tick("2019-07-02T08:00:00", 10.0, "B")]}
        with pytest.raises(CalendarGapError) as err:
            roll_series(ticks, cal)
        assert date(2019, 7, 2) in err.value.dates

    def test_one_contract_per_day(self):
        cal = RollCalendar.from_pairs([("A", "2019-06-28"),
                                       ("B", "2019-12-31")])
        ticks = {"A": [tick("2019-06-28T08:00:00", 10.0, "A"),
                       tick("2019-07-01T08:00:00", 11.0, "A")],
                 "B": [tick("2019-06-28T09:00:00", 10.5, "B"),
                       tick("2019-07-01T09:00:00", 11.5, "B")]}
        rolled = roll_series(ticks, cal)
        by_day = {}
        for rec in rolled:
            by_day.setdefault(rec.timestamp.date(), set()).add(rec.contract)
        assert by_day[date(2019, 6, 28)] == {"A"}
        assert by_day[date(2019, 7, 1)] == {"B"}

    def test_from_expiries_previous_weekday(self):
        # expiry Monday: switch on Friday -> last inclusion Thursday
        cal = RollCalendar.from_expiries([("A", date(2019, 12, 16))])
        assert cal.entries[0][1] == date(2019, 12, 12)


class TestToBars:
    def test_last_price_sampling(self):
        ticks = [tick("2019-01-02T07:00:30", 10.0),
                 tick("2019-01-02T07:04:59", 10.2)]
        panel = to_bars(ticks, SESSION)
        assert panel.returns[0, 0] == pytest.approx(math.log(10.2 / 10.0))
        assert np.all(panel.returns[0, 1:] == 0.0)

    def test_empty_interval_carries_forward(self):
        ticks = [tick("2019-01-02T07:02:00", 10.0),
                 tick("2019-01-02T07:12:00", 10.5)]
        panel = to_bars(ticks, SESSION)
        # bar 2 empty: zero return; bar 3 carries the move
        assert panel.returns[0, 1] == 0.0
        assert panel.returns[0, 2] == pytest.approx(math.log(10.5 / 10.0))

    def test_one_trade_day_flagged(self):
        panel = to_bars([tick("2019-01-02T09:00:00", 10.0)], SESSION)
        assert panel.low_liquidity[0]
        assert np.all(panel.returns == 0.0)

    def test_zero_trade_days_skipped_and_reported(self):
        skipped = []
        panel = to_bars([tick("2019-01-02T09:00:00", 10.0)], SESSION,
                        skipped_days=skipped)
        assert skipped == []

    def test_returns_sum_to_close_minus_open(self):
        rng = np.random.default_rng(1)
        ticks = []
        price = 20.0
        for minute in range(0, 600, 7):
            price *= math.exp(rng.standard_normal() * 1e-3)
            hh, mm = divmod(7 * 60 + minute, 60)
            ticks.append(tick(f"2019-01-02T{hh:02d}:{mm:02d}:11", price))
        panel = to_bars([t for t in ticks
                         if t.timestamp.time() < SESSION.close_time], SESSION)
        total = panel.returns[0].sum()
        assert total == pytest.approx(panel.log_close[0] - panel.log_open[0],
                                      abs=1e-12)

    def test_grid_size_is_120(self):
        panel = to_bars([tick("2019-01-02T07:00:00", 10.0),
                         tick("2019-01-02T16:59:59", 10.1)], SESSION)
        assert panel.m == 120


class TestDailyReturns:
    def make_panel(self, closes, contracts=None):
        n = len(closes)
        contracts = contracts or ["A"] * n
        ticks = []
        for i, (c, name) in enumerate(zip(closes, contracts)):
            day = f"2019-01-{i + 2:02d}"
            ticks.append(tick(f"{day}T07:00:00", c, name))
            ticks.append(tick(f"{day}T16:00:00", c, name))
        return to_bars(ticks, SESSION)

    def test_flat_closes_zero_return(self):
        panel = self.make_panel([10.0, 10.0])
        pairs = daily_returns(panel)
        assert pairs[0][1] == pytest.approx(0.0)

    def test_log_identity(self):
        panel = self.make_panel([math.e, math.e ** 2])
        pairs = daily_returns(panel)
        assert pairs[0][1] == pytest.approx(1.0, abs=1e-12)

    def test_roll_boundary_excluded(self):
        panel = self.make_panel([10.0, 10.5, 11.0], ["A", "A", "B"])
        assert np.isnan(panel.r[2])
        assert len(daily_returns(panel)) == 1

    def test_needs_two_days(self):
        panel = self.make_panel([10.0])
        with pytest.raises(IngestError):
            daily_returns(panel)


class TestIngestEndToEnd:
    def test_deterministic_reruns(self, tmp_path):
        from carbonvol.synthetic import write_synthetic_ticks
        paths, cal_path = write_synthetic_ticks(tmp_path, n_days=30, seed=2)
        cal = RollCalendar.from_csv(cal_path)
        panel1, errors1, _ = ingest([str(p) for p in paths], cal)
        panel2, errors2, _ = ingest([str(p) for p in paths], cal)
        np.testing.assert_array_equal(panel1.returns, panel2.returns)
        assert not errors1 and not errors2

    def test_synthetic_roundtrip_recovers_simulated_grid(self, tmp_path):
        from carbonvol.config import SimConfig
        from carbonvol.simulate import simulate
        from carbonvol.synthetic import DEFAULT_PARAMS, write_synthetic_ticks
        paths, cal_path = write_synthetic_ticks(tmp_path, n_days=25, seed=3)
        sim = simulate(DEFAULT_PARAMS,
                       SimConfig(n_days=25, seed=3, n_replicas=1,
                                 burn_in_days=60))
        cal = RollCalendar.from_csv(cal_path)
        panel, _, _ = ingest([str(p) for p in paths], cal)
        np.testing.assert_allclose(panel.returns, sim.returns[0], atol=5e-9)

    def test_csv_roundtrip(self, tmp_path):
        from carbonvol.synthetic import write_synthetic_ticks
        paths, cal_path = write_synthetic_ticks(tmp_path, n_days=30, seed=4)
        cal = RollCalendar.from_csv(cal_path)
        panel, _, _ = ingest([str(p) for p in paths], cal)
        out = tmp_path / "bars.csv"
        panel.to_csv(out)
        back = BarPanel.from_csv(out)
        np.testing.assert_allclose(back.returns, panel.returns, atol=1e-12)
        np.testing.assert_array_equal(back.contract, panel.contract)
        boundary = np.where(panel.contract[1:] != panel.contract[:-1])[0]
        assert np.isnan(back.r[boundary + 1]).all()

    def test_every_tick_lands_in_one_cell(self, tmp_path):
        # counts per day equal the number of retained in-session ticks
        path = tmp_path / "ticks.csv"
        write_ticks(path, [
            ("2019-01-02T07:00:00", 10.0, 1, "A"),
            ("2019-01-02T12:00:00", 10.1, 1, "A"),
            ("2019-01-03T09:30:00", 10.2, 1, "A"),
        ])
        records, _ = load_ticks(path)
        panel = to_bars(records, SESSION)
        assert panel.n_trades.tolist() == [2, 1]
