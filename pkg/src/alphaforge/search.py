"""Monte-Carlo tree search over derivation states.

States are partial expression trees; actions are production rules applied
to the leftmost nonterminal, so transitions are deterministic and the
search tree mirrors the derivation tree.  Child selection uses a PUCT
bonus scaled by ``sqrt(b / b_ref)`` where ``b`` is the state's branching
factor, which keeps exploration comparable between wide and narrow
states.  Ties break toward the lowest action id.

Leaf evaluation can be batched: up to ``parallelism`` leaves are gathered
per round under a virtual loss before their network evaluations are
applied, which keeps the visit pattern identical run to run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grammar as gr
from . import neural


@dataclass
class MCTSConfig:
    simulations: int = 64
    c_puct: float = 1.0
    temperature: float = 1.0
    parallelism: int = 1
    virtual_loss: float = 1.0


class SearchNode:
    __slots__ = ("state", "terminal", "valid", "expanded", "P", "N", "W",
                 "children", "vloss")

    def __init__(self, state: gr.DerivationState):
        self.state = state
        self.terminal = gr.is_complete(state)
        self.valid = [] if self.terminal else gr.valid_actions(state)
        self.expanded = False
        self.P: dict[int, float] = {}
        self.N: dict[int, int] = {}
        self.W: dict[int, float] = {}
        self.children: dict[int, SearchNode] = {}
        self.vloss: dict[int, float] = {}

    def visit_total(self) -> int:
        return sum(self.N.values())

    def q_value(self, a: int) -> float:
        n = self.N[a] + self.vloss.get(a, 0.0)
        if n <= 0:
            return 0.0
        return (self.W[a] - self.vloss.get(a, 0.0)) / n

    def expand(self, params, net_cfg: neural.NetConfig) -> float:
        probs, value = neural.policy_and_value(
            self.state.tree, self.valid, params, net_cfg
        )
        for a in self.valid:
            self.P[a] = float(probs[a])
            self.N[a] = 0
            self.W[a] = 0.0
        self.expanded = True
        return value


def puct_select(node: SearchNode, c_puct: float, b_ref: float) -> int:
    """Best action under the branch-adapted PUCT rule, lowest id on ties."""
    b = len(node.valid)
    scale = c_puct * math.sqrt(b / b_ref)
    total = sum(node.N[a] + node.vloss.get(a, 0.0) for a in node.valid)
    sqrt_total = math.sqrt(total)
    best_a, best_s = node.valid[0], -math.inf
    for a in node.valid:
        n = node.N[a] + node.vloss.get(a, 0.0)
        u = scale * node.P[a] * sqrt_total / (1.0 + n)
        s = node.q_value(a) + u
        if s > best_s:
            best_a, best_s = a, s
    return best_a


def _select_leaf(root: SearchNode, cfg: MCTSConfig, b_ref: float):
    """Walk down applying virtual loss; return the leaf and its path."""
    path: list[tuple[SearchNode, int]] = []
    node = root
    while node.expanded and not node.terminal:
        a = puct_select(node, cfg.c_puct, b_ref)
        node.vloss[a] = node.vloss.get(a, 0.0) + cfg.virtual_loss
        path.append((node, a))
        child = node.children.get(a)
        if child is None:
            child = SearchNode(gr.apply_rule(node.state, a))
            node.children[a] = child
            node = child
            break
        node = child
    return node, path


def _backup(path, value: float, cfg: MCTSConfig):
    for node, a in path:
        node.vloss[a] = node.vloss.get(a, 0.0) - cfg.virtual_loss
        if node.vloss[a] == 0.0:
            del node.vloss[a]
        node.N[a] += 1
        node.W[a] += value


def run_search(
    root: SearchNode,
    params,
    net_cfg: neural.NetConfig,
    cfg: MCTSConfig,
) -> SearchNode:
    """Run the configured number of simulations from ``root``."""
    if root.terminal:
        raise gr.GrammarError("cannot search from a complete state")
    b_ref = root.state.grammar.b_ref
    start_total = root.visit_total()
    root_expansion = 0 if root.expanded else 1
    done = 0
    while done < cfg.simulations:
        batch = []
        width = min(cfg.parallelism, cfg.simulations - done)
        for _ in range(width):
            leaf, path = _select_leaf(root, cfg, b_ref)
            batch.append((leaf, path))
            if not path:
                break  # root itself was the leaf; nothing else to gather
        for leaf, path in batch:
            if leaf.terminal:
                _, value = neural.policy_and_value(
                    leaf.state.tree, [], params, net_cfg
                )
            elif not leaf.expanded:
                value = leaf.expand(params, net_cfg)
            else:
                # same leaf gathered twice within one virtual-loss batch
                value = _reeval(leaf, params, net_cfg)
            _backup(path, value, cfg)
        done += len(batch)
    assert root.visit_total() == start_total + cfg.simulations - root_expansion
    return root


def _reeval(leaf: SearchNode, params, net_cfg) -> float:
    _, value = neural.policy_and_value(leaf.state.tree, leaf.valid, params,
                                       net_cfg)
    return value


def visit_distribution(root: SearchNode, temperature: float):
    """Actions and the visit-count policy pi(a) ~ N(a)^(1/T).

    A temperature below 1e-3 collapses to the argmax (lowest id on ties).
    """
    actions = list(root.valid)
    counts = np.array([root.N[a] for a in actions], dtype=np.float64)
    if temperature < 1e-3:
        pi = np.zeros_like(counts)
        pi[int(np.argmax(counts))] = 1.0
        return actions, pi
    if counts.sum() == 0:
        pi = np.full_like(counts, 1.0 / len(counts))
        return actions, pi
    scaled = counts ** (1.0 / temperature)
    return actions, scaled / scaled.sum()


def descend(root: SearchNode, action: int) -> SearchNode:
    """Reuse the committed child's subtree as the next search root."""
    child = root.children.get(action)
    if child is None:
        child = SearchNode(gr.apply_rule(root.state, action))
    return child
