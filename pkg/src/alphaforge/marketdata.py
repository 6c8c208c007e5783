"""Market data ingest, forward-return targets, synthetic markets.

The CSV schema is one row per (date, ticker):

    date,ticker,open,high,low,close,volume,vwap

Dates are ISO-8601; empty cells are missing.  Synthetic markets embed a
planted signal directly into future closing prices, so the tau-day
forward return computed from the generated prices carries the signal.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging

import numpy as np

from . import evaluator, metrics
from .exprtree import Node
from .panel import Panel, Series2D
from .symbols import FEATURES

log = logging.getLogger(__name__)

CSV_HEADER = ["date", "ticker", "open", "high", "low", "close", "volume", "vwap"]


class DataError(ValueError):
    pass


def load_csv(path) -> Panel:
    rows: dict[tuple[str, str], list[float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise DataError(
                f"bad header: expected {','.join(CSV_HEADER)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"line {lineno}: expected 8 fields, got {len(row)}")
            date, ticker = row[0], row[1]
            try:
                dt.date.fromisoformat(date)
            except ValueError:
                raise DataError(f"line {lineno}: bad date {date!r}") from None
            key = (date, ticker)
            if key in rows:
                raise DataError(f"line {lineno}: duplicate (date,ticker) {key}")
            try:
                vals = [float(x) if x != "" else np.nan for x in row[2:]]
            except ValueError:
                raise DataError(f"line {lineno}: non-numeric field") from None
            rows[key] = vals

    days = tuple(sorted({d for d, _ in rows}))
    stocks = tuple(sorted({s for _, s in rows}))
    day_pos = {d: i for i, d in enumerate(days)}
    stock_pos = {s: i for i, s in enumerate(stocks)}
    mats = {f: np.full((len(days), len(stocks)), np.nan) for f in FEATURES}
    for (d, s), vals in rows.items():
        for f, v in zip(FEATURES, vals):
            mats[f][day_pos[d], stock_pos[s]] = v

    panel = Panel({f: Series2D(mats[f], days, stocks) for f in FEATURES})
    _warn_bad_ohlc(panel)
    return panel


def _warn_bad_ohlc(panel: Panel):
    o, h, lo, c = (panel[f].values for f in ("open", "high", "low", "close"))
    with np.errstate(invalid="ignore"):
        bad = (h < np.maximum(o, c)) | (lo > np.minimum(o, c))
    n = int(np.nansum(bad))
    if n:
        log.warning("%d cells violate high >= max(open,close) >= low", n)


def save_csv(panel: Panel, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for di, day in enumerate(panel.day_index):
            for si, stock in enumerate(panel.stock_index):
                vals = [panel[f].values[di, si] for f in FEATURES]
                if all(np.isnan(v) for v in vals):
                    continue
                writer.writerow(
                    [day, stock]
                    + ["" if np.isnan(v) else repr(float(v)) for v in vals]
                )


def filter_days(panel: Panel, start=None, end=None, exclude_ranges=()):
    """Restrict a panel to an inclusive ISO date range minus excluded spans."""
    keep = []
    for i, day in enumerate(panel.day_index):
        if start is not None and day < start:
            continue
        if end is not None and day > end:
            continue
        if any(a <= day <= b for a, b in exclude_ranges):
            continue
        keep.append(i)
    idx = np.asarray(keep, dtype=int)
    days = tuple(panel.day_index[i] for i in keep)
    feats = {
        name: Series2D(s.values[idx], days, s.stock_index)
        for name, s in panel.features.items()
    }
    return Panel(feats)


def forward_return(panel: Panel, tau: int) -> Series2D:
    """r_{t,i} = close_{t+tau,i} / close_{t,i} - 1; last tau days missing."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    close = panel["close"].values
    out = np.full_like(close, np.nan)
    if tau < close.shape[0]:
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:-tau] = close[tau:] / close[:-tau] - 1.0
    return panel["close"].like(out)


# ---------------------------------------------------------------------------
# synthetic markets
# ---------------------------------------------------------------------------

def _calendar(n_days: int) -> tuple[str, ...]:
    days = []
    d = dt.date(2021, 1, 4)
    while len(days) < n_days:
        if d.weekday() < 5:
            days.append(d.isoformat())
        d += dt.timedelta(days=1)
    return tuple(days)


def _zscore_row(row: np.ndarray) -> np.ndarray:
    ok = ~np.isnan(row)
    out = np.zeros_like(row)
    if ok.sum() >= 2:
        mu = row[ok].mean()
        sd = row[ok].std()
        if sd > 0:
            out[ok] = (row[ok] - mu) / sd
    return out


def synth_market(
    seed: int,
    n_stocks: int,
    n_days: int,
    planted_expr: Node,
    signal_strength: float,
    horizon: int = 20,
    return_scale: float = 0.02,
) -> tuple[Panel, Series2D]:
    """Seeded synthetic OHLCV market whose forward returns carry a signal.

    Targets are ``signal_strength * zscore(planted) + (1-s) * noise``
    rescaled to return magnitudes and written into closing prices tau days
    ahead, so ``forward_return(panel, horizon)`` recovers them.  The
    planted factor's mean daily IC is verified to exceed
    ``signal_strength - 0.1``; generation retries with a sub-seed on
    failure.
    """
    if not 0.0 <= signal_strength <= 1.0:
        raise ValueError("signal_strength must be in [0, 1]")
    for attempt in range(10):
        panel = _generate(seed + 7919 * attempt, n_stocks, n_days,
                          planted_expr, signal_strength, horizon, return_scale)
        targets = forward_return(panel, horizon)
        scores = evaluator.evaluate(planted_expr, panel)
        ic = metrics.mean_ic_values(scores, targets)
        if ic is not None and ic >= signal_strength - 0.1:
            return panel, targets
        if signal_strength <= 0.1 and ic is None:
            # a pure-noise request with a degenerate factor is acceptable
            return panel, targets
    raise DataError("could not plant the requested signal strength")


def _generate(seed, n_stocks, n_days, planted_expr, strength, horizon, scale):
    rng = np.random.default_rng(seed)
    days = _calendar(n_days)
    stocks = tuple(f"SYN{i:03d}" for i in range(n_stocks))
    shape = (n_days, n_stocks)

    close = np.empty(shape)
    openp = np.empty(shape)
    high = np.empty(shape)
    low = np.empty(shape)
    volume = np.empty(shape)
    vwap = np.empty(shape)

    p0 = np.exp(rng.normal(3.5, 0.8, n_stocks))
    noise = rng.standard_normal(shape)
    drift = rng.standard_normal(shape) * 0.02

    def finish_day(d):
        prev = close[d - 1] if d > 0 else close[d]
        openp[d] = np.abs(prev * (1.0 + 0.002 * rng.standard_normal(n_stocks)))
        hi_pad = np.abs(rng.standard_normal(n_stocks)) * 0.005
        lo_pad = np.abs(rng.standard_normal(n_stocks)) * 0.005
        high[d] = np.maximum(openp[d], close[d]) * (1.0 + hi_pad)
        low[d] = np.minimum(openp[d], close[d]) * (1.0 - lo_pad)
        vwap[d] = low[d] + rng.random(n_stocks) * (high[d] - low[d])
        volume[d] = np.exp(rng.normal(12.0, 0.5, n_stocks))

    def partial_panel(upto):
        idx = days[:upto]
        feats = {
            "open": openp, "high": high, "low": low,
            "close": close, "volume": volume, "vwap": vwap,
        }
        return Panel({
            name: Series2D(arr[:upto].copy(), idx, stocks)
            for name, arr in feats.items()
        })

    for d in range(n_days):
        if d < horizon:
            close[d] = p0 if d == 0 else np.abs(close[d - 1] * (1.0 + drift[d]))
        else:
            t = d - horizon
            row = evaluator.evaluate(planted_expr, partial_panel(t + 1)).values[-1]
            z = _zscore_row(row)
            eps = _zscore_row(noise[t])
            r = scale * (strength * z + (1.0 - strength) * eps)
            r = np.clip(r, -0.5, 0.5)
            close[d] = close[t] * (1.0 + r)
        finish_day(d)

    return Panel({
        "open": Series2D(openp, days, stocks),
        "high": Series2D(high, days, stocks),
        "low": Series2D(low, days, stocks),
        "close": Series2D(close, days, stocks),
        "volume": Series2D(volume, days, stocks),
        "vwap": Series2D(vwap, days, stocks),
    })
