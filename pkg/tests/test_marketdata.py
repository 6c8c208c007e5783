import numpy as np
import pytest

from alphaforge import evaluator, marketdata, metrics
from alphaforge.exprtree import parse
from alphaforge.marketdata import (
    DataError,
    filter_days,
    forward_return,
    load_csv,
    save_csv,
    synth_market,
)

from conftest import make_panel


class TestCsvRoundTrip:
    def test_save_load_identity(self, tmp_path):
        panel = make_panel(1, n_days=12, n_stocks=4, nan_frac=0.1)
        path = tmp_path / "p.csv"
        save_csv(panel, path)
        loaded = load_csv(path)
        assert loaded.day_index == panel.day_index
        assert loaded.stock_index == panel.stock_index
        for f in panel.features:
            a, b = panel[f].values, loaded[f].values
            assert (np.isnan(a) == np.isnan(b)).all()
            ok = ~np.isnan(a)
            np.testing.assert_array_equal(a[ok], b[ok])

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("date,ticker,open,high,low,close,volume\n")
        with pytest.raises(DataError, match="header"):
            load_csv(p)

    def test_duplicate_row(self, tmp_path):
        p = tmp_path / "dup.csv"
        p.write_text(
            "date,ticker,open,high,low,close,volume,vwap\n"
            "2021-01-04,A,1,2,0.5,1,100,1\n"
            "2021-01-04,A,1,2,0.5,1,100,1\n"
        )
        with pytest.raises(DataError, match="line 3.*duplicate"):
            load_csv(p)

    def test_bad_date(self, tmp_path):
        p = tmp_path / "date.csv"
        p.write_text(
            "date,ticker,open,high,low,close,volume,vwap\n"
            "04/01/2021,A,1,2,0.5,1,100,1\n"
        )
        with pytest.raises(DataError, match="bad date"):
            load_csv(p)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "nn.csv"
        p.write_text(
            "date,ticker,open,high,low,close,volume,vwap\n"
            "2021-01-04,A,1,2,x,1,100,1\n"
        )
        with pytest.raises(DataError, match="non-numeric"):
            load_csv(p)

    def test_empty_cells_become_missing(self, tmp_path):
        p = tmp_path / "gap.csv"
        p.write_text(
            "date,ticker,open,high,low,close,volume,vwap\n"
            "2021-01-04,A,1,2,0.5,,100,1\n"
        )
        panel = load_csv(p)
        assert np.isnan(panel["close"].values[0, 0])
        assert panel["open"].values[0, 0] == 1.0

    def test_union_calendar(self, tmp_path):
        p = tmp_path / "u.csv"
        p.write_text(
            "date,ticker,open,high,low,close,volume,vwap\n"
            "2021-01-04,A,1,2,0.5,1,100,1\n"
            "2021-01-05,B,1,2,0.5,1,100,1\n"
        )
        panel = load_csv(p)
        assert panel.n_days == 2 and panel.n_stocks == 2
        assert np.isnan(panel["close"].values[1, 0])  # A missing on day 2


class TestFilters:
    def test_date_range_and_exclusion(self):
        panel = make_panel(2, n_days=10, n_stocks=2, nan_frac=0.0)
        days = panel.day_index
        out = filter_days(panel, start=days[2], end=days[8],
                          exclude_ranges=[(days[4], days[5])])
        assert out.day_index == days[2:4] + days[6:9]
        np.testing.assert_array_equal(out["close"].values[0],
                                      panel["close"].values[2])


class TestForwardReturn:
    def test_values_and_tail(self):
        panel = make_panel(3, n_days=10, n_stocks=3, nan_frac=0.0)
        tau = 3
        r = forward_return(panel, tau).values
        close = panel["close"].values
        for d in range(10 - tau):
            np.testing.assert_allclose(
                r[d], close[d + tau] / close[d] - 1.0
            )
        assert np.isnan(r[-tau:]).all()

    def test_tau_validation(self):
        panel = make_panel(3, n_days=5, n_stocks=2)
        with pytest.raises(ValueError):
            forward_return(panel, 0)


class TestSynthMarket:
    def test_planted_signal_recoverable(self):
        expr = parse("Mean(close,20)")
        panel, targets = synth_market(0, 10, 200, expr, 0.9, horizon=20)
        scores = evaluator.evaluate(expr, panel)
        ic = metrics.mean_ic_values(scores, targets)
        assert ic is not None and ic >= 0.8

    def test_strength_one_is_nearly_perfect(self):
        expr = parse("close")
        panel, targets = synth_market(1, 8, 100, expr, 1.0, horizon=5)
        scores = evaluator.evaluate(expr, panel)
        ic = metrics.mean_ic_values(scores, targets)
        assert ic == pytest.approx(1.0, abs=1e-9)

    def test_noise_only_has_no_signal(self):
        expr = parse("close")
        panel, targets = synth_market(2, 10, 150, expr, 0.0, horizon=5)
        scores = evaluator.evaluate(expr, panel)
        ic = metrics.mean_ic_values(scores, targets)
        assert abs(ic) < 0.2

    def test_deterministic_per_seed(self):
        expr = parse("close")
        a, _ = synth_market(3, 5, 60, expr, 0.8, horizon=5)
        b, _ = synth_market(3, 5, 60, expr, 0.8, horizon=5)
        np.testing.assert_array_equal(a["close"].values, b["close"].values)
        c, _ = synth_market(4, 5, 60, expr, 0.8, horizon=5)
        assert not np.array_equal(a["close"].values, c["close"].values)

    def test_ohlc_consistency(self):
        panel, _ = synth_market(5, 6, 80, parse("close"), 0.9, horizon=5)
        o, h, lo, c = (panel[f].values for f in ("open", "high", "low",
                                                 "close"))
        assert (h >= np.maximum(o, c) - 1e-12).all()
        assert (lo <= np.minimum(o, c) + 1e-12).all()
        assert (panel["volume"].values > 0).all()

    def test_targets_match_forward_return(self):
        panel, targets = synth_market(6, 5, 80, parse("close"), 0.7,
                                      horizon=7)
        np.testing.assert_array_equal(
            targets.values, forward_return(panel, 7).values
        )

    def test_strength_validation(self):
        with pytest.raises(ValueError):
            synth_market(0, 5, 50, parse("close"), 1.5)

    def test_csv_round_trip_preserves_signal(self, tmp_path):
        expr = parse("Mean(close,20)")
        panel, _ = synth_market(7, 8, 150, expr, 0.9, horizon=10)
        path = tmp_path / "synth.csv"
        save_csv(panel, path)
        loaded = load_csv(path)
        targets = forward_return(loaded, 10)
        scores = evaluator.evaluate(expr, loaded)
        ic = metrics.mean_ic_values(scores, targets)
        assert ic >= 0.8
