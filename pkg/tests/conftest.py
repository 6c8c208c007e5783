import numpy as np
import pytest

from alphaforge.panel import Panel, Series2D
from alphaforge.symbols import FEATURES


def make_panel(seed: int, n_days: int = 50, n_stocks: int = 10,
               nan_frac: float = 0.05) -> Panel:
    rng = np.random.default_rng(seed)
    days = tuple(f"2021-{1 + d // 28:02d}-{1 + d % 28:02d}"
                 for d in range(n_days))
    stocks = tuple(f"S{i:02d}" for i in range(n_stocks))
    feats = {}
    for name in FEATURES:
        vals = np.exp(rng.normal(2.0, 0.7, (n_days, n_stocks)))
        if nan_frac > 0:
            mask = rng.random((n_days, n_stocks)) < nan_frac
            vals[mask] = np.nan
        feats[name] = Series2D(vals, days, stocks)
    return Panel(feats)


@pytest.fixture
def panel():
    return make_panel(0)
