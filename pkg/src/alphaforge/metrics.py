"""IC-family metrics and the top-k/drop-n backtester."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .exprtree import Node
from .panel import Panel, Series2D

ANNUALIZATION = 252.0


class MetricsError(ValueError):
    pass


def daily_ic(scores: np.ndarray, returns: np.ndarray) -> Optional[float]:
    """Pearson correlation with pairwise NaN dropping.

    Returns None when fewer than two pairs remain or either side is
    constant: an undefined IC is a value, not an error.
    """
    s = np.asarray(scores, dtype=np.float64)
    r = np.asarray(returns, dtype=np.float64)
    ok = ~(np.isnan(s) | np.isnan(r))
    if ok.sum() < 2:
        return None
    s, r = s[ok], r[ok]
    ds = s - s.mean()
    dr = r - r.mean()
    denom = math.sqrt(float(ds @ ds)) * math.sqrt(float(dr @ dr))
    if denom == 0.0:
        return None
    return float(ds @ dr) / denom


def _rank_row(v: np.ndarray) -> np.ndarray:
    out = np.full_like(v, np.nan)
    ok = ~np.isnan(v)
    if ok.any():
        out[ok] = rankdata(v[ok], method="average")
    return out


def daily_ic_series(
    scores: Series2D, targets: Series2D, ranked: bool = False
) -> list[Optional[float]]:
    out = []
    for d in range(scores.n_days):
        s = scores.values[d]
        r = targets.values[d]
        if ranked:
            s, r = _rank_row(s), _rank_row(r)
        out.append(daily_ic(s, r))
    return out


def _mean_std(values: list[Optional[float]]):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.asarray(vals)
    return float(arr.mean()), float(arr.std())


def mean_ic_values(scores: Series2D, targets: Series2D) -> Optional[float]:
    mean, _ = _mean_std(daily_ic_series(scores, targets))
    return mean


def mean_ic(expr: Node, panel: Panel, targets: Series2D) -> float:
    from . import evaluator

    scores = evaluator.evaluate(expr, panel)
    mean = mean_ic_values(scores, targets)
    if mean is None:
        raise MetricsError("no day yields a defined IC")
    return mean


def ic_summary(scores: Series2D, targets: Series2D) -> dict[str, Optional[float]]:
    """IC, RankIC and their mean/volatility ratios over defined days."""
    out: dict[str, Optional[float]] = {}
    for name, ranked in (("ic", False), ("rank_ic", True)):
        series = daily_ic_series(scores, targets, ranked=ranked)
        mean, std = _mean_std(series)
        out[name] = mean
        ir = None
        if mean is not None and std is not None and std > 0:
            ir = mean / std
        out["rank_icir" if ranked else "icir"] = ir
    return out


def rank_metrics(expr: Node, panel: Panel, targets: Series2D):
    from . import evaluator

    scores = evaluator.evaluate(expr, panel)
    summary = ic_summary(scores, targets)
    if summary["rank_ic"] is None:
        raise MetricsError("no day yields a defined RankIC")
    return summary["rank_ic"], summary["rank_icir"]


# ---------------------------------------------------------------------------
# backtest
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    ic: Optional[float] = None
    rank_ic: Optional[float] = None
    icir: Optional[float] = None
    rank_icir: Optional[float] = None
    sharpe: Optional[float] = None
    max_drawdown: Optional[float] = None
    nav_series: list[float] = field(default_factory=list)
    carried_days: list[str] = field(default_factory=list)
    daily_trades: list[tuple[int, int]] = field(default_factory=list)  # (buys, sells)

    def to_text(self) -> str:
        def fmt(v):
            return "undefined" if v is None else f"{v:.6f}"

        lines = []
        for key in ("ic", "rank_ic", "icir", "rank_icir", "sharpe",
                    "max_drawdown"):
            val = getattr(self, key)
            if val is not None or key in ("ic", "rank_ic", "icir", "rank_icir"):
                lines.append(f"{key}\t{fmt(val)}")
        if self.carried_days:
            lines.append(f"carried_days\t{len(self.carried_days)}")
        return "\n".join(lines)

    def nav_csv(self) -> str:
        lines = ["day,nav"]
        lines += [f"{i},{float(v)!r}" for i, v in enumerate(self.nav_series)]
        return "\n".join(lines)


def max_drawdown(nav: list[float]) -> float:
    peak = -math.inf
    worst = 0.0
    for v in nav:
        peak = max(peak, v)
        if peak > 0:
            worst = max(worst, (peak - v) / peak)
    return worst


def sharpe_ratio(nav: list[float], risk_free_daily: float = 0.0) -> float:
    if len(nav) < 3:
        return 0.0
    arr = np.asarray(nav)
    rets = arr[1:] / arr[:-1] - 1.0
    sd = rets.std(ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        return 0.0
    return float((rets - risk_free_daily).mean() / sd * math.sqrt(ANNUALIZATION))


def backtest_topk(
    scores: Series2D,
    prices: Series2D,
    k: int,
    n: int,
    fee_rate: float = 0.0,
    risk_free_daily: float = 0.0,
) -> MetricsReport:
    """Daily top-k/drop-n rebalance with equal-weight targets.

    Each day at most n worst-ranked holdings that fell out of the top-k
    are sold and at most n best-ranked unheld top-k names are bought with
    the freed capital; positions enter at close and a proportional fee is
    charged on traded notional.  Holdings whose price is missing are
    carried at their last known price and the day is flagged.
    """
    if k > scores.n_stocks:
        raise ValueError("k exceeds universe size")
    if n > k:
        raise ValueError("n exceeds k")
    if scores.day_index != prices.day_index or scores.stock_index != prices.stock_index:
        raise ValueError("scores and prices must share indices")

    n_stocks = scores.n_stocks
    cash = 1.0
    shares = np.zeros(n_stocks)
    last_price = np.full(n_stocks, np.nan)
    navs = [1.0]
    carried: list[str] = []
    trades: list[tuple[int, int]] = []

    for d in range(scores.n_days):
        p = prices.values[d].copy()
        held = shares > 0
        missing_held = held & np.isnan(p)
        if missing_held.any():
            carried.append(scores.day_index[d])
            p[missing_held] = last_price[missing_held]
        ok_price = ~np.isnan(p)
        last_price[ok_price] = p[ok_price]

        value = cash + float(np.nansum(shares * np.where(held, p, 0.0)))

        s = scores.values[d]
        ranked = sorted(
            (i for i in range(n_stocks) if not np.isnan(s[i])),
            key=lambda i: (-s[i], i),
        )
        topk = set(ranked[:k])
        rank_of = {i: pos for pos, i in enumerate(ranked)}

        # sells: worst-ranked holdings that fell out of the top-k
        sell_candidates = [
            i for i in range(n_stocks)
            if held[i] and i not in topk and not missing_held[i]
        ]
        sell_candidates.sort(key=lambda i: (-rank_of.get(i, n_stocks), i))
        n_sold = 0
        for i in sell_candidates[:n]:
            notional = shares[i] * p[i]
            cash += notional * (1.0 - fee_rate)
            shares[i] = 0.0
            n_sold += 1
        held = shares > 0

        # buys: best-ranked unheld top-k names
        buy_candidates = [i for i in ranked[:k] if not held[i] and ok_price[i]]
        room = k - int(held.sum())
        n_bought = 0
        for i in buy_candidates[: min(n, room)]:
            notional = min(value / k, cash / (1.0 + fee_rate))
            if notional <= 0:
                break
            shares[i] += notional / p[i]
            cash -= notional * (1.0 + fee_rate)
            n_bought += 1
        trades.append((n_bought, n_sold))

        navs.append(cash + float(np.sum(shares * np.where(shares > 0, p, 0.0))))

    return MetricsReport(
        sharpe=sharpe_ratio(navs, risk_free_daily),
        max_drawdown=max_drawdown(navs),
        nav_series=navs,
        carried_days=carried,
        daily_trades=trades,
    )
