"""Alpha mining: self-play trajectories, pool updates, network training.

Each trajectory derives one complete expression with tree search guided
by the current network.  The finished factor is inserted into the pool
(weights refit, weakest pruned at capacity) and every state along the
trajectory receives the value target

    z = (1 - max(0, max_j sim(f_j, f_new))) * IC_pool

where the similarity runs over the other pool members and IC_pool is the
mean daily IC of the reweighted combination.  An empty pool applies no
penalty.  Factors that cannot be evaluated (all-missing output, no
defined IC day) leave the pool unchanged and are labeled z = 0.

Refinement reuses the machinery on a single seed factor: the derivation
prefix within half the seed's length budget is kept, the rest is searched
from scratch, and the reward is the absolute single-factor IC.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import evaluator, grammar as gr, neural, pool as pool_mod, search
from .exprtree import Node, similarity, to_text
from .metrics import MetricsError, daily_ic
from .panel import Panel, Series2D
from .pool import FactorPool, zscore_by_day


@dataclass
class MinerConfig:
    epochs: int = 100
    trajectories_per_epoch: int = 100
    pool_capacity: int = 10
    batch_size: int = 64
    buffer_size: int = 20000
    train_batches_per_epoch: int = 16
    explore_frac: float = 0.5       # fraction of trajectories sampled at T
    early_stop_frac: float = 0.2
    pool_opt_steps: int = 200
    pool_step_size: float = 1e-2


class ReplayBuffer:
    """FIFO buffer of training samples."""

    def __init__(self, maxlen: int):
        self.items: deque[neural.TrainSample] = deque(maxlen=maxlen)

    def __len__(self) -> int:
        return len(self.items)

    def extend(self, samples):
        self.items.extend(samples)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, len(self.items), size=min(batch_size,
                                                        len(self.items)))
        return [self.items[int(i)] for i in idx]


def value_target(new_expr: Node, pool_exprs: list[Node],
                 combined_ic: float) -> float:
    """Diversity-discounted value target for a freshly mined factor."""
    others = [e for e in pool_exprs if e is not new_expr]
    if not others:
        return combined_ic
    worst = max(similarity(e, new_expr) for e in others)
    return (1.0 - max(0.0, worst)) * combined_ic


def pool_ic_on(pool: FactorPool, panel: Panel, targets: Series2D) -> float:
    """Mean daily IC of the pool combination evaluated on another panel."""
    if not pool.exprs:
        return 0.0
    zs = [zscore_by_day(evaluator.evaluate(e, panel).values)
          for e in pool.exprs]
    y = np.tensordot(pool.weights, np.stack(zs), axes=1)
    vals = [daily_ic(y[d], targets.values[d]) for d in range(y.shape[0])]
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else 0.0


def _play_trajectory(
    root: search.SearchNode,
    params,
    net_cfg: neural.NetConfig,
    mcts_cfg: search.MCTSConfig,
    temperature: float,
    rng: np.random.Generator,
):
    """Derive one complete expression; returns (tree, unlabeled samples)."""
    samples: list[neural.TrainSample] = []
    node = root
    while not node.terminal:
        search.run_search(node, params, net_cfg, mcts_cfg)
        actions, pi = search.visit_distribution(node, temperature)
        samples.append(
            neural.TrainSample(node.state.tree, actions, pi, z=0.0)
        )
        if temperature < 1e-3:
            a = actions[int(np.argmax(pi))]
        else:
            a = int(rng.choice(actions, p=pi))
        node = search.descend(node, a)
    return node.state.tree, samples


@dataclass
class MineResult:
    pool: FactorPool
    params: dict
    history: list[dict] = field(default_factory=list)
    epochs_run: int = 0


def mine(
    panel: Panel,
    targets: Series2D,
    grammar: gr.Grammar,
    seed: int,
    net_cfg: Optional[neural.NetConfig] = None,
    mcts_cfg: Optional[search.MCTSConfig] = None,
    cfg: Optional[MinerConfig] = None,
    valid_panel: Optional[Panel] = None,
    valid_targets: Optional[Series2D] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> MineResult:
    net_cfg = net_cfg or neural.NetConfig(n_actions=grammar.num_actions)
    mcts_cfg = mcts_cfg or search.MCTSConfig()
    cfg = cfg or MinerConfig()
    if net_cfg.n_actions != grammar.num_actions:
        raise ValueError("network action space does not match the grammar")

    rng = np.random.default_rng(seed)
    params = neural.init_params(net_cfg, rng)
    opt = neural.AdamState()
    buffer = ReplayBuffer(cfg.buffer_size)
    pool = FactorPool(capacity=cfg.pool_capacity)

    patience = max(1, int(math.ceil(cfg.early_stop_frac * cfg.epochs)))
    best_score = -math.inf
    stale = 0
    history: list[dict] = []

    for epoch in range(cfg.epochs):
        explore_cut = int(cfg.explore_frac * cfg.trajectories_per_epoch)
        mined: list[str] = []
        for t in range(cfg.trajectories_per_epoch):
            temp = mcts_cfg.temperature if t < explore_cut else 0.0
            root = search.SearchNode(gr.start_state(grammar))
            tree, samples = _play_trajectory(
                root, params, net_cfg, mcts_cfg, temp, rng
            )
            z = 0.0
            try:
                new_pool, ic_f = pool_mod.add_and_optimize(
                    pool, tree, panel, targets, rng,
                    steps=cfg.pool_opt_steps, step_size=cfg.pool_step_size,
                )
            except (evaluator.EvalError, MetricsError, pool_mod.PoolError):
                new_pool = None
            if new_pool is not None and all(
                np.isfinite(w) for w in new_pool.weights
            ):
                z = value_target(tree, new_pool.exprs, ic_f)
                pool = new_pool
                mined.append(to_text(tree))
            for s in samples:
                s.z = z
            buffer.extend(samples)

        losses = []
        rejected = 0
        for _ in range(cfg.train_batches_per_epoch):
            if not len(buffer):
                break
            batch = buffer.sample(cfg.batch_size, rng)
            loss, parts = neural.train_step(batch, params, opt, net_cfg,
                                            drop_rng=rng)
            losses.append(loss)
            rejected += int(parts.get("rejected", 0))

        if valid_panel is not None and valid_targets is not None:
            score = pool_ic_on(pool, valid_panel, valid_targets)
        else:
            score = pool.combined_ic
        row = {
            "epoch": epoch,
            "pool_size": len(pool),
            "train_ic": pool.combined_ic,
            "valid_ic": score,
            "mean_loss": float(np.mean(losses)) if losses else float("nan"),
            "rejected_steps": rejected,
            "buffer_size": len(buffer),
            "mined": len(mined),
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)

        if score > best_score + 1e-12:
            best_score = score
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                return MineResult(pool, params, history, epoch + 1)

    return MineResult(pool, params, history, cfg.epochs)


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

@dataclass
class RefineResult:
    expr: Node
    ic: float
    seed_ic: Optional[float]
    prefix: str
    params: dict
    history: list[dict] = field(default_factory=list)
    epochs_run: int = 0


def refine(
    seed_expr: Node,
    panel: Panel,
    targets: Series2D,
    grammar: gr.Grammar,
    seed: int,
    net_cfg: Optional[neural.NetConfig] = None,
    mcts_cfg: Optional[search.MCTSConfig] = None,
    cfg: Optional[MinerConfig] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> RefineResult:
    """Search completions of the seed's leading half, reward = |mean IC|."""
    net_cfg = net_cfg or neural.NetConfig(n_actions=grammar.num_actions)
    mcts_cfg = mcts_cfg or search.MCTSConfig()
    cfg = cfg or MinerConfig()

    seed_len = gr.delta_length(seed_expr)
    if grammar.max_length is not None and seed_len > grammar.max_length:
        raise gr.GrammarError(
            f"seed factor length {seed_len} exceeds the bound "
            f"{grammar.max_length}"
        )
    budget = math.ceil(seed_len / 2)
    prefix_state = gr.masked_prefix(seed_expr, budget, grammar)

    try:
        seed_ic: Optional[float] = abs(
            _single_ic(seed_expr, panel, targets)
        )
    except MetricsError:
        seed_ic = None

    rng = np.random.default_rng(seed)
    params = neural.init_params(net_cfg, rng)
    opt = neural.AdamState()
    buffer = ReplayBuffer(cfg.buffer_size)

    best_expr = seed_expr
    best_ic = seed_ic if seed_ic is not None else -math.inf
    history: list[dict] = []
    patience = max(1, int(math.ceil(cfg.early_stop_frac * cfg.epochs)))
    stale = 0
    epochs_run = cfg.epochs

    for epoch in range(cfg.epochs):
        explore_cut = int(cfg.explore_frac * cfg.trajectories_per_epoch)
        improved = False
        for t in range(cfg.trajectories_per_epoch):
            temp = mcts_cfg.temperature if t < explore_cut else 0.0
            root = search.SearchNode(prefix_state)
            tree, samples = _play_trajectory(
                root, params, net_cfg, mcts_cfg, temp, rng
            )
            try:
                z = abs(_single_ic(tree, panel, targets))
            except (evaluator.EvalError, MetricsError):
                z = 0.0
            else:
                if z > best_ic:
                    best_expr, best_ic = tree, z
                    improved = True
            for s in samples:
                s.z = z
            buffer.extend(samples)

        losses = []
        for _ in range(cfg.train_batches_per_epoch):
            if not len(buffer):
                break
            batch = buffer.sample(cfg.batch_size, rng)
            loss, _ = neural.train_step(batch, params, opt, net_cfg,
                                        drop_rng=rng)
            losses.append(loss)

        row = {
            "epoch": epoch,
            "best_ic": best_ic if best_ic > -math.inf else float("nan"),
            "best_expr": to_text(best_expr),
            "mean_loss": float(np.mean(losses)) if losses else float("nan"),
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        stale = 0 if improved else stale + 1
        if stale >= patience:
            epochs_run = epoch + 1
            break

    final_ic = best_ic if best_ic > -math.inf else 0.0
    return RefineResult(
        expr=best_expr,
        ic=final_ic,
        seed_ic=seed_ic,
        prefix=to_text(prefix_state.tree),
        params=params,
        history=history,
        epochs_run=epochs_run,
    )


def _single_ic(expr: Node, panel: Panel, targets: Series2D) -> float:
    scores = evaluator.evaluate(expr, panel)
    zs = zscore_by_day(scores.values)
    vals = [daily_ic(zs[d], targets.values[d]) for d in range(zs.shape[0])]
    vals = [v for v in vals if v is not None]
    if not vals:
        raise MetricsError("no day yields a defined IC")
    return float(np.mean(vals))
