"""Factor pool: linear combination, weight optimization, weakest pruning.

Factor values are cross-sectionally z-scored per day before combination
so that weights are comparable across raw scales.  Weights are fit by
plain gradient descent on the mean squared error against the targets,
with step halving whenever a step would increase the loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import evaluator
from .exprtree import Node, parse, to_text
from .panel import Panel, Series2D


class PoolError(ValueError):
    pass


def zscore_by_day(values: np.ndarray) -> np.ndarray:
    """Per-day cross-sectional z-score; degenerate days become zeros."""
    out = np.full_like(values, np.nan)
    with np.errstate(all="ignore"):
        return _zscore_rows(values, out)


def _zscore_rows(values, out):
    for d in range(values.shape[0]):
        row = values[d]
        ok = ~np.isnan(row)
        if ok.sum() < 2:
            continue
        mu = row[ok].mean()
        sd = row[ok].std()
        out[d, ok] = (row[ok] - mu) / sd if sd > 1e-12 else 0.0
    return out


@dataclass
class FactorPool:
    capacity: int
    exprs: list[Node] = field(default_factory=list)
    zvalues: list[np.ndarray] = field(default_factory=list)  # z-scored (D,S)
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    combined_ic: float = 0.0

    def __len__(self) -> int:
        return len(self.exprs)

    def copy(self) -> "FactorPool":
        return FactorPool(
            capacity=self.capacity,
            exprs=list(self.exprs),
            zvalues=list(self.zvalues),
            weights=self.weights.copy(),
            combined_ic=self.combined_ic,
        )

    def combination(self) -> np.ndarray:
        if not self.exprs:
            raise PoolError("empty pool")
        stacked = np.stack(self.zvalues)  # (J, D, S)
        return np.tensordot(self.weights, stacked, axes=1)

    def save(self, path):
        with open(path, "w") as fh:
            for w, e in zip(self.weights, self.exprs):
                fh.write(f"{float(w)!r}\t{to_text(e)}\n")

    @classmethod
    def load(cls, path, panel: Panel, targets: Series2D,
             capacity: int) -> "FactorPool":
        pool = cls(capacity=capacity)
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                w_text, expr_text = line.split("\t", 1)
                expr = parse(expr_text)
                zvals = zscore_by_day(evaluator.evaluate(expr, panel).values)
                pool.exprs.append(expr)
                pool.zvalues.append(zvals)
                pool.weights = np.append(pool.weights, float(w_text))
        if pool.exprs:
            pool.combined_ic = combined_ic(pool, targets)
        return pool


def _loss_and_grad(zvalues, weights, target_values):
    stacked = np.stack(zvalues)                 # (J, D, S)
    valid = ~(np.isnan(stacked).any(axis=0) | np.isnan(target_values))
    if not valid.any():
        raise PoolError("no valid cells for the combination loss")
    # zero out missing cells so they contribute nothing to either term
    z = np.where(np.isnan(stacked), 0.0, stacked)
    y = np.tensordot(weights, z, axes=1)        # (D, S)
    resid = np.where(valid, y - np.where(valid, target_values, 0.0), 0.0)
    n = valid.sum()
    loss = float((resid ** 2).sum() / n)
    grad = 2.0 * np.tensordot(z, resid, axes=((1, 2), (0, 1))) / n
    return loss, grad


def combination_loss(pool: FactorPool, targets: Series2D) -> float:
    if not pool.exprs:
        raise PoolError("empty pool")
    loss, _ = _loss_and_grad(pool.zvalues, pool.weights, targets.values)
    return loss


def combination_grad(pool: FactorPool, targets: Series2D) -> np.ndarray:
    _, grad = _loss_and_grad(pool.zvalues, pool.weights, targets.values)
    return grad


def combined_ic(pool: FactorPool, targets: Series2D) -> float:
    from .metrics import daily_ic

    y = pool.combination()
    ics = [daily_ic(y[d], targets.values[d]) for d in range(y.shape[0])]
    vals = [v for v in ics if v is not None]
    return float(np.mean(vals)) if vals else 0.0


def optimize_weights(zvalues, weights, target_values, steps=200,
                     step_size=1e-2) -> np.ndarray:
    w = weights.copy()
    lr = step_size
    loss, grad = _loss_and_grad(zvalues, w, target_values)
    for _ in range(steps):
        w_try = w - lr * grad
        loss_try, grad_try = _loss_and_grad(zvalues, w_try, target_values)
        if loss_try > loss:
            lr *= 0.5
            continue
        w, loss, grad = w_try, loss_try, grad_try
    return w


def add_and_optimize(
    pool: FactorPool,
    new_expr: Node,
    panel: Panel,
    targets: Series2D,
    rng: np.random.Generator,
    steps: int = 200,
    step_size: float = 1e-2,
) -> tuple[FactorPool, float]:
    """Insert a factor, refit weights, prune the weakest when over capacity."""
    zvals = zscore_by_day(evaluator.evaluate(new_expr, panel).values)

    out = pool.copy()
    out.exprs.append(new_expr)
    out.zvalues.append(zvals)
    out.weights = np.append(out.weights, rng.uniform(-0.1, 0.1))

    out.weights = optimize_weights(out.zvalues, out.weights, targets.values,
                                   steps=steps, step_size=step_size)
    if len(out) > out.capacity:
        p = int(np.argmin(np.abs(out.weights)))
        del out.exprs[p]
        del out.zvalues[p]
        out.weights = np.delete(out.weights, p)
    out.combined_ic = combined_ic(out, targets)
    return out, out.combined_ic
