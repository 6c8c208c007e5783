"""Operator semantics over panel data.

Evaluates a complete expression tree to a (days x stocks) matrix.
Missing-value policy is strict: any rolling window containing a missing
value, or with fewer than t days of history, is missing; Log/Pow outside
their domains and division by (near) zero are missing, not errors.
``Ref``/``Delta`` only require the single referenced cell t days back.
Rolling windows are trailing and include the current day.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .exprtree import Node
from .panel import Panel, Series2D

_DIV_EPS = 1e-12


class EvalError(ValueError):
    pass


def _rolling(x: np.ndarray, t: int, fn) -> np.ndarray:
    out = np.full_like(x, np.nan)
    if t <= x.shape[0]:
        w = sliding_window_view(x, t, axis=0)  # (D-t+1, S, t) oldest..newest
        with np.errstate(all="ignore"):
            vals = fn(w)
        bad = np.isnan(w).any(axis=-1)
        out[t - 1:] = np.where(bad, np.nan, vals)
    return out


def _moments(w):
    mu = w.mean(axis=-1)
    d = w - mu[..., None]
    return d


def _skew(w):
    d = _moments(w)
    m2 = (d ** 2).mean(axis=-1)
    m3 = (d ** 3).mean(axis=-1)
    return m3 / m2 ** 1.5


def _kurt(w):
    d = _moments(w)
    m2 = (d ** 2).mean(axis=-1)
    m4 = (d ** 4).mean(axis=-1)
    return m4 / m2 ** 2 - 3.0


def _wma_weights(t: int) -> np.ndarray:
    # newest day weighted t, oldest weighted 1
    w = np.arange(1, t + 1, dtype=np.float64)
    return w / w.sum()


def _ema_weights(t: int) -> np.ndarray:
    # closed form of the recursion s_i = a*x_i + (1-a)*s_{i-1}, s_0 = x_0
    a = 2.0 / (t + 1.0)
    w = np.empty(t, dtype=np.float64)
    w[0] = (1.0 - a) ** (t - 1)
    for i in range(1, t):
        w[i] = a * (1.0 - a) ** (t - 1 - i)
    return w


def _ts_rank(w):
    last = w[..., -1:]
    less = (w < last).sum(axis=-1)
    eq = (w == last).sum(axis=-1)
    return (less + (eq + 1) / 2.0) / w.shape[-1]


def _ref(x: np.ndarray, t: int) -> np.ndarray:
    out = np.full_like(x, np.nan)
    if t < x.shape[0]:
        out[t:] = x[:-t]
    return out


def _csrank(x: np.ndarray) -> np.ndarray:
    ranks = rankdata(x, method="average", axis=1, nan_policy="omit")
    counts = np.sum(~np.isnan(x), axis=1, keepdims=True).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return ranks / counts


def _paired(x, y, t, want_corr):
    out = np.full_like(x, np.nan)
    if t > x.shape[0]:
        return out
    wx = sliding_window_view(x, t, axis=0)
    wy = sliding_window_view(y, t, axis=0)
    with np.errstate(all="ignore"):
        dx = wx - wx.mean(axis=-1)[..., None]
        dy = wy - wy.mean(axis=-1)[..., None]
        cov = (dx * dy).sum(axis=-1) / (t - 1)
        if want_corr:
            sx = np.sqrt((dx ** 2).sum(axis=-1) / (t - 1))
            sy_ = np.sqrt((dy ** 2).sum(axis=-1) / (t - 1))
            vals = cov / (sx * sy_)
            vals = np.where((sx < _DIV_EPS) | (sy_ < _DIV_EPS), np.nan, vals)
        else:
            vals = cov
    bad = np.isnan(wx).any(axis=-1) | np.isnan(wy).any(axis=-1)
    out[t - 1:] = np.where(bad, np.nan, vals)
    return out


_ROLLING_FNS = {
    "Rank": _ts_rank,
    "WMA": None,   # weight-based, handled below
    "EMA": None,
    "Mean": lambda w: w.mean(axis=-1),
    "Sum": lambda w: w.sum(axis=-1),
    "Std": lambda w: w.std(axis=-1, ddof=1),
    "Var": lambda w: w.var(axis=-1, ddof=1),
    "Skew": _skew,
    "Kurt": _kurt,
    "Max": lambda w: w.max(axis=-1),
    "Min": lambda w: w.min(axis=-1),
    "Med": lambda w: np.median(w, axis=-1),
    "Mad": lambda w: np.abs(_moments(w)).mean(axis=-1),
}


def _window_arg(node: Node) -> int:
    if node.label.kind != "num":
        raise EvalError(
            f"window argument must be an integer literal, got {node.label.text()}"
        )
    return int(node.label.value)


def evaluate(tree: Node, panel: Panel) -> Series2D:
    """Evaluate a complete tree over a panel."""
    ref = panel["close"]  # any feature fixes the index
    values = _eval(tree, panel)
    return ref.like(values)


def _eval(node: Node, panel: Panel) -> np.ndarray:
    label = node.label
    shape = (panel.n_days, panel.n_stocks)
    if label.kind == "nt":
        raise EvalError("cannot evaluate a partial tree")
    if label.kind == "feature":
        return panel[label.name].values
    if label.kind in ("num", "const"):
        return np.full(shape, float(label.value))

    name = label.name
    with np.errstate(all="ignore"):
        if name == "Abs":
            return np.abs(_eval(node.children[0], panel))
        if name == "Sign":
            return np.sign(_eval(node.children[0], panel))
        if name == "Log":
            x = _eval(node.children[0], panel)
            return np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), np.nan)
        if name == "CSRank":
            return _csrank(_eval(node.children[0], panel))
        if name in ("Add", "Mul", "Greater", "Less", "Sub", "Div", "Pow"):
            x = _eval(node.children[0], panel)
            y = _eval(node.children[1], panel)
            if name == "Add":
                return x + y
            if name == "Mul":
                return x * y
            if name == "Greater":
                return np.maximum(x, y)
            if name == "Less":
                return np.minimum(x, y)
            if name == "Sub":
                return x - y
            if name == "Div":
                out = x / y
                return np.where(np.abs(y) < _DIV_EPS, np.nan, out)
            # Pow: x^y = exp(y ln x) for x > 0
            safe = np.where(x > 0, x, 1.0)
            out = np.exp(y * np.log(safe))
            return np.where(x > 0, out, np.nan)
        if name in ("Cov", "Corr"):
            x = _eval(node.children[0], panel)
            y = _eval(node.children[1], panel)
            t = _window_arg(node.children[2])
            return _paired(x, y, t, want_corr=(name == "Corr"))
        if name == "Ref":
            x = _eval(node.children[0], panel)
            return _ref(x, _window_arg(node.children[1]))
        if name == "Delta":
            x = _eval(node.children[0], panel)
            return x - _ref(x, _window_arg(node.children[1]))
        if name in ("WMA", "EMA"):
            x = _eval(node.children[0], panel)
            t = _window_arg(node.children[1])
            weights = _wma_weights(t) if name == "WMA" else _ema_weights(t)
            return _rolling(x, t, lambda w: w @ weights)
        fn = _ROLLING_FNS.get(name)
        if fn is not None:
            x = _eval(node.children[0], panel)
            t = _window_arg(node.children[1])
            return _rolling(x, t, fn)
    raise EvalError(f"unknown operator {name!r}")
