"""Alpha grammars: rule vocabulary, legal actions, deterministic expansion.

Three nested levels are supported:

* ``syn``  -- syntactic validity only (arity-consistent prefix trees);
  rolling windows are restricted to integer constants so the level is
  trainable, and terminals include both features and constants.
* ``sem``  -- adds the financial-semantic constraints: the only terminal
  expansion of ``Expr`` is a feature, constants enter only through the
  designated binary slots, and windows expand only to ``Num``.
* ``semk`` -- ``sem`` plus the length bound: a rule applies only while
  ``k + delta_k <= K``.

A length bound may also be attached to ``syn``/``sem`` so rollouts and
mining terminate; ``semk`` requires one.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional

from . import symbols as sy
from .exprtree import Node, to_text


# arity classes
UNARY = "Unary"
BINARY = "Binary"
BINARY_ASYM = "BinaryAsym"
ROLLING = "Rolling"
PAIRED_ROLLING = "PairedRolling"
TERMINAL = "TerminalChoice"
START = "Start"

# delta_k by rule shape (terminal choices are free; an operator rule costs
# one per expression slot it opens, window slots included)
_DELTA_BY_CLASS = {
    UNARY: 1,
    BINARY: 2,
    BINARY_ASYM: 2,
    ROLLING: 2,
    PAIRED_ROLLING: 3,
    TERMINAL: 0,
    START: 0,
}


@dataclass(frozen=True)
class ProductionRule:
    id: int
    lhs: str                      # nonterminal name
    arity_class: str
    delta_k: int
    op_name: Optional[str] = None
    slots: tuple[str, ...] = ()   # child nonterminal names for operator rules
    terminal: Optional[sy.Symbol] = None

    def build(self) -> Node:
        """The subtree spliced in place of the expanded nonterminal."""
        if self.terminal is not None:
            return Node(self.terminal)
        if self.op_name is None:
            # Start -> Expr
            return Node(sy.nt_symbol(self.slots[0]))
        children = tuple(Node(sy.nt_symbol(s)) for s in self.slots)
        return Node(sy.op_symbol(self.op_name), children)

    def rhs_text(self) -> str:
        return to_text(self.build())


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class Grammar:
    level: str
    rules: tuple[ProductionRule, ...]
    max_length: Optional[int]  # K; required for semk
    b_ref: float = 40.0

    @property
    def num_actions(self) -> int:
        return len(self.rules)

    def rules_for(self, nt_name: str) -> tuple[ProductionRule, ...]:
        return tuple(r for r in self.rules if r.lhs == nt_name)

    def dump(self) -> str:
        lines = ["id\tlhs\trhs\tdelta_k"]
        for r in self.rules:
            lines.append(f"{r.id}\t{r.lhs}\t{r.rhs_text()}\t{r.delta_k}")
        return "\n".join(lines)


def _operator_rules(level: str) -> list[tuple[str, str, tuple[str, ...]]]:
    """(op_name, arity_class, slot nonterminals) in canonical order."""
    out = []
    for op in sy.OPERATORS:
        if op.arity == 1:
            out.append((op.name, UNARY, (sy.NT_EXPR,)))
        elif op.family in (sy.BINARY, sy.BINARY_ASYM):
            cls = BINARY if op.family == sy.BINARY else BINARY_ASYM
            out.append((op.name, cls, (sy.NT_EXPR, sy.NT_EXPR)))
            if level in ("sem", "semk"):
                out.append((op.name, cls, (sy.NT_EXPR, sy.NT_CONST)))
                if op.family == sy.BINARY_ASYM:
                    out.append((op.name, cls, (sy.NT_CONST, sy.NT_EXPR)))
        elif op.family == sy.ROLLING:
            out.append((op.name, ROLLING, (sy.NT_EXPR, sy.NT_NUM)))
        elif op.family == sy.PAIRED_ROLLING:
            out.append(
                (op.name, PAIRED_ROLLING, (sy.NT_EXPR, sy.NT_EXPR, sy.NT_NUM))
            )
    return out


def build_grammar(
    level: str, max_length: Optional[int] = None, b_ref: float = 40.0
) -> Grammar:
    if level not in ("syn", "sem", "semk"):
        raise GrammarError(f"unknown grammar level {level!r}")
    if level == "semk" and max_length is None:
        raise GrammarError("semk requires a max_length bound")

    rules: list[ProductionRule] = []

    def add(lhs, arity_class, op_name=None, slots=(), terminal=None):
        rules.append(
            ProductionRule(
                id=len(rules),
                lhs=lhs,
                arity_class=arity_class,
                delta_k=_DELTA_BY_CLASS[arity_class],
                op_name=op_name,
                slots=tuple(slots),
                terminal=terminal,
            )
        )

    # id 0: the notational start rule
    add(sy.NT_START, START, slots=(sy.NT_EXPR,))
    # operators in registry order
    for op_name, cls, slots in _operator_rules(level):
        add(sy.NT_EXPR, cls, op_name=op_name, slots=slots)
    # features
    for name in sy.FEATURES:
        add(sy.NT_EXPR, TERMINAL, terminal=sy.feature_symbol(name))
    # constants
    if level == "syn":
        for value in sy.CONSTANTS:
            add(sy.NT_EXPR, TERMINAL, terminal=sy.const_symbol(value))
    else:
        for value in sy.CONSTANTS:
            add(sy.NT_CONST, TERMINAL, terminal=sy.const_symbol(value))
    # window literals
    for value in sy.NUMS:
        add(sy.NT_NUM, TERMINAL, terminal=sy.num_symbol(value))

    return Grammar(level=level, rules=tuple(rules), max_length=max_length,
                   b_ref=b_ref)


# ---------------------------------------------------------------------------
# derivation states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivationState:
    tree: Node
    k: int
    grammar: Grammar


def start_state(grammar: Grammar) -> DerivationState:
    return DerivationState(Node(sy.nt_symbol(sy.NT_START)), 0, grammar)


def state_from_tree(tree: Node, grammar: Grammar) -> DerivationState:
    """Wrap an arbitrary (possibly partial) tree as a derivation state."""
    return DerivationState(tree, delta_length(tree), grammar)


def _leftmost_nt_path(node: Node, path: tuple[int, ...] = ()):
    if node.label.kind == "nt":
        return path, node
    for i, c in enumerate(node.children):
        found = _leftmost_nt_path(c, path + (i,))
        if found is not None:
            return found
    return None


def is_complete(state: DerivationState) -> bool:
    return _leftmost_nt_path(state.tree) is None


def valid_actions(state: DerivationState) -> list[int]:
    """Rule ids applicable to the leftmost nonterminal, ascending."""
    found = _leftmost_nt_path(state.tree)
    if found is None:
        raise GrammarError("state is complete; no nonterminal to expand")
    _, nt = found
    g = state.grammar
    out = []
    for r in g.rules_for(nt.label.name):
        if g.max_length is not None and state.k + r.delta_k > g.max_length:
            continue
        out.append(r.id)
    return out


def _replace_at(node: Node, path: tuple[int, ...], subtree: Node) -> Node:
    if not path:
        return subtree
    i = path[0]
    children = list(node.children)
    children[i] = _replace_at(children[i], path[1:], subtree)
    return Node(node.label, tuple(children))


def apply_rule(state: DerivationState, rule_id: int) -> DerivationState:
    if rule_id not in valid_actions(state):
        raise GrammarError(f"rule {rule_id} is not valid for this state")
    rule = state.grammar.rules[rule_id]
    path, _ = _leftmost_nt_path(state.tree)
    new_tree = _replace_at(state.tree, path, rule.build())
    return DerivationState(new_tree, state.k + rule.delta_k, state.grammar)


def random_rollout(
    grammar: Grammar, rng: random.Random
) -> DerivationState:
    """Complete a uniform-random derivation from the start symbol."""
    state = start_state(grammar)
    while not is_complete(state):
        actions = valid_actions(state)
        state = apply_rule(state, rng.choice(actions))
    return state


# ---------------------------------------------------------------------------
# length accounting and masked prefixes
# ---------------------------------------------------------------------------

def _node_delta(node: Node) -> int:
    if node.label.kind != "op":
        return 0
    return node.label.op.arity  # 1 / 2 / 3 matches the per-rule increments


def delta_length(tree: Node) -> int:
    """Total delta_k of a tree (sum over its operator nodes)."""
    return _node_delta(tree) + sum(delta_length(c) for c in tree.children)


def masked_prefix(tree: Node, budget: int, grammar: Grammar) -> DerivationState:
    """Keep the leftmost derivation prefix within ``budget`` length units.

    Derivation steps are replayed in pre-order; the first step that would
    push the accumulated length past ``budget`` stops the replay and every
    remaining subtree collapses back to its nonterminal.
    """
    acc = {"k": 0, "stopped": False}

    def expected_nt(node: Node) -> str:
        if node.label.kind == "num":
            return sy.NT_NUM
        if node.label.kind == "const" and grammar.level != "syn":
            return sy.NT_CONST
        return sy.NT_EXPR

    def walk(node: Node) -> Node:
        if acc["stopped"]:
            return Node(sy.nt_symbol(expected_nt(node)))
        cost = _node_delta(node)
        if acc["k"] + cost > budget:
            acc["stopped"] = True
            return Node(sy.nt_symbol(expected_nt(node)))
        acc["k"] += cost
        if not node.children:
            return node
        return Node(node.label, tuple(walk(c) for c in node.children))

    masked = walk(tree)
    return DerivationState(masked, acc["k"], grammar)
