"""Panel data containers: (days x stocks) matrices with missing support.

Missing values are carried as NaN in float64 arrays; NaN is a distinct
marker state, never a legal data value.  All series in one panel share
the same day and stock indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .symbols import FEATURES


@dataclass(frozen=True)
class Series2D:
    values: np.ndarray          # float64 (days, stocks); NaN = missing
    day_index: tuple[str, ...]
    stock_index: tuple[str, ...]

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape != (len(self.day_index), len(self.stock_index)):
            raise ValueError("values shape does not match indices")

    @property
    def n_days(self) -> int:
        return len(self.day_index)

    @property
    def n_stocks(self) -> int:
        return len(self.stock_index)

    def like(self, values: np.ndarray) -> "Series2D":
        return Series2D(np.asarray(values, dtype=np.float64),
                        self.day_index, self.stock_index)


@dataclass(frozen=True)
class Panel:
    features: dict[str, Series2D]

    def __post_init__(self):
        missing = [f for f in FEATURES if f not in self.features]
        if missing:
            raise ValueError(f"panel lacks features: {missing}")
        ref = next(iter(self.features.values()))
        for s in self.features.values():
            if s.day_index != ref.day_index or s.stock_index != ref.stock_index:
                raise ValueError("panel features have mismatched indices")

    def __getitem__(self, name: str) -> Series2D:
        if name not in self.features:
            raise KeyError(f"unknown feature {name!r}")
        return self.features[name]

    @property
    def day_index(self) -> tuple[str, ...]:
        return next(iter(self.features.values())).day_index

    @property
    def stock_index(self) -> tuple[str, ...]:
        return next(iter(self.features.values())).stock_index

    @property
    def n_days(self) -> int:
        return len(self.day_index)

    @property
    def n_stocks(self) -> int:
        return len(self.stock_index)

    def slice_days(self, start: int, stop: int) -> "Panel":
        feats = {
            name: Series2D(s.values[start:stop],
                           s.day_index[start:stop], s.stock_index)
            for name, s in self.features.items()
        }
        return Panel(feats)
