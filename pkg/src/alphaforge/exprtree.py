"""Expression trees: construction, text round-trip, isomorphism, similarity.

Trees are immutable values.  The canonical text format is function-call
notation with no whitespace, e.g. ``Cov(volume,vwap,40)``; partial trees
print nonterminal leaves as ``<Expr>``, ``<Num>``, ``<Constant>``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .symbols import (
    FEATURES,
    OP_BY_NAME,
    Symbol,
    const_symbol,
    feature_symbol,
    num_symbol,
    op_symbol,
)


class ParseError(ValueError):
    """Malformed expression text; carries the character position."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class ArityError(ValueError):
    """Operator applied to the wrong number of arguments."""


@dataclass(frozen=True)
class Node:
    label: Symbol
    children: tuple["Node", ...] = ()

    def __post_init__(self):
        if self.label.kind == "op":
            want = self.label.op.arity
            if len(self.children) != want:
                raise ArityError(
                    f"{self.label.name} takes {want} argument(s), "
                    f"got {len(self.children)}"
                )
        elif self.children:
            raise ArityError(f"{self.label.text()} takes no arguments")

    def is_complete(self) -> bool:
        if self.label.kind == "nt":
            return False
        return all(c.is_complete() for c in self.children)


def leaf(symbol: Symbol) -> Node:
    return Node(symbol)


def subtree_count(tree: Node) -> int:
    """Number of nodes (each node roots one subtree)."""
    return 1 + sum(subtree_count(c) for c in tree.children)


# ---------------------------------------------------------------------------
# text round trip
# ---------------------------------------------------------------------------

def to_text(tree: Node) -> str:
    if not tree.children:
        return tree.label.text()
    args = ",".join(to_text(c) for c in tree.children)
    return f"{tree.label.text()}({args})"


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self) -> str:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            raise ParseError(f"expected {ch!r}", self.pos)
        self.pos += 1

    def ident(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        if self.pos == start:
            raise ParseError("expected identifier", start)
        return self.text[start:self.pos]

    def number(self) -> Symbol:
        start = self.pos
        if self.peek() in "+-":
            self.pos += 1
        seen_digit = seen_dot = False
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isdigit():
                seen_digit = True
            elif ch == "." and not seen_dot:
                seen_dot = True
            elif ch in "eE" and seen_digit:
                seen_dot = True  # scientific form is non-integer
                self.pos += 1
                if self.pos < len(self.text) and self.text[self.pos] in "+-":
                    self.pos += 1
                continue
            else:
                break
            self.pos += 1
        if not seen_digit:
            raise ParseError("expected number", start)
        token = self.text[start:self.pos]
        if seen_dot:
            return const_symbol(float(token))
        value = int(token)
        if value <= 0:
            raise ParseError("window/integer literal must be positive", start)
        return num_symbol(value)


def parse(text: str) -> Node:
    """Parse canonical function-call notation into a tree."""
    tok = _Tokenizer(text)
    tree = _parse_expr(tok)
    if tok.peek():
        raise ParseError("trailing input", tok.pos)
    return tree


def _parse_expr(tok: _Tokenizer) -> Node:
    ch = tok.peek()
    if not ch:
        raise ParseError("unexpected end of input", tok.pos)
    if ch.isdigit() or ch in "+-.":
        return Node(tok.number())
    name = tok.ident()
    if name in OP_BY_NAME:
        op = OP_BY_NAME[name]
        tok.expect("(")
        args = [_parse_expr(tok)]
        while tok.peek() == ",":
            tok.expect(",")
            args.append(_parse_expr(tok))
        tok.expect(")")
        if len(args) != op.arity:
            raise ArityError(
                f"{name} takes {op.arity} argument(s), got {len(args)}"
            )
        return Node(op_symbol(name), tuple(args))
    if name in FEATURES:
        return Node(feature_symbol(name))
    raise ParseError(f"unknown symbol {name!r}", tok.pos - len(name))


# ---------------------------------------------------------------------------
# isomorphism and similarity
# ---------------------------------------------------------------------------

def _labels_equal(a: Symbol, b: Symbol) -> bool:
    return a == b


def isomorphic(t1: Node, t2: Node) -> bool:
    """Structural equality up to operator symmetry.

    Children of symmetric operators match under any permutation; children
    of Cov/Corr match under permutation of the first two operands only.
    """
    if not _labels_equal(t1.label, t2.label):
        return False
    a, b = t1.children, t2.children
    if len(a) != len(b):
        return False
    if not a:
        return True
    if t1.label.kind == "op":
        op = t1.label.op
        if op.symmetric:
            return (
                (isomorphic(a[0], b[0]) and isomorphic(a[1], b[1]))
                or (isomorphic(a[0], b[1]) and isomorphic(a[1], b[0]))
            )
        if op.pair_symmetric:
            if not isomorphic(a[2], b[2]):
                return False
            return (
                (isomorphic(a[0], b[0]) and isomorphic(a[1], b[1]))
                or (isomorphic(a[0], b[1]) and isomorphic(a[1], b[0]))
            )
    return all(isomorphic(x, y) for x, y in zip(a, b))


def canonical_key(tree: Node) -> str:
    """Canonical string such that two subtrees share a key iff isomorphic."""
    label = tree.label.text()
    if not tree.children:
        return label
    keys = [canonical_key(c) for c in tree.children]
    if tree.label.kind == "op":
        op = tree.label.op
        if op.symmetric:
            keys = sorted(keys)
        elif op.pair_symmetric:
            keys = sorted(keys[:2]) + keys[2:]
    return f"{label}({','.join(keys)})"


def _subtree_keys(tree: Node, out: dict[str, int]):
    key = canonical_key(tree)
    size = subtree_count(tree)
    if out.get(key, -1) < size:
        out[key] = size
    for c in tree.children:
        _subtree_keys(c, out)


def similarity(t1: Node, t2: Node) -> float:
    """Largest common (whole) subtree size over the larger tree's size."""
    k1: dict[str, int] = {}
    k2: dict[str, int] = {}
    _subtree_keys(t1, k1)
    _subtree_keys(t2, k2)
    best = 0
    for key, size in k1.items():
        if key in k2:
            best = max(best, size)  # equal keys imply equal sizes
    return best / max(subtree_count(t1), subtree_count(t2))
