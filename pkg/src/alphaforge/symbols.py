"""Symbol vocabulary: operators, features, and literal sets.

The operator registry is the single place where names, arities and
symmetry properties live.  Everything else (grammar construction, the
evaluator, tree isomorphism, the neural vocabulary) derives from it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


# Operator families.  CSRank is grouped with the rolling operators in the
# registry but takes no window argument, so its grammar arity is 1.
UNARY = "unary"
BINARY = "binary"
BINARY_ASYM = "binary_asym"
ROLLING = "rolling"
PAIRED_ROLLING = "paired_rolling"


@dataclass(frozen=True)
class OpInfo:
    name: str
    family: str
    arity: int            # number of children in the expression tree
    windowed: bool        # last child is a window length
    symmetric: bool       # children may be freely permuted
    pair_symmetric: bool  # first two children may be swapped (Cov/Corr)


def _op(name, family):
    if family == UNARY:
        return OpInfo(name, family, 1, False, False, False)
    if family == BINARY:
        return OpInfo(name, family, 2, False, True, False)
    if family == BINARY_ASYM:
        return OpInfo(name, family, 2, False, False, False)
    if family == ROLLING:
        if name == "CSRank":
            # cross-sectional rank: no window argument
            return OpInfo(name, family, 1, False, False, False)
        return OpInfo(name, family, 2, True, False, False)
    if family == PAIRED_ROLLING:
        return OpInfo(name, family, 3, True, False, True)
    raise ValueError(family)


# Registry order is canonical and determines rule-id assignment.
OPERATORS: tuple[OpInfo, ...] = (
    _op("Abs", UNARY),
    _op("Sign", UNARY),
    _op("Log", UNARY),
    _op("Add", BINARY),
    _op("Mul", BINARY),
    _op("Greater", BINARY),
    _op("Less", BINARY),
    _op("Div", BINARY_ASYM),
    _op("Pow", BINARY_ASYM),
    _op("Sub", BINARY_ASYM),
    _op("CSRank", ROLLING),
    _op("Rank", ROLLING),
    _op("WMA", ROLLING),
    _op("EMA", ROLLING),
    _op("Ref", ROLLING),
    _op("Mean", ROLLING),
    _op("Sum", ROLLING),
    _op("Std", ROLLING),
    _op("Var", ROLLING),
    _op("Skew", ROLLING),
    _op("Kurt", ROLLING),
    _op("Max", ROLLING),
    _op("Min", ROLLING),
    _op("Med", ROLLING),
    _op("Mad", ROLLING),
    _op("Delta", ROLLING),
    _op("Cov", PAIRED_ROLLING),
    _op("Corr", PAIRED_ROLLING),
)

OP_BY_NAME: dict[str, OpInfo] = {o.name: o for o in OPERATORS}

FEATURES: tuple[str, ...] = ("open", "high", "low", "close", "volume", "vwap")
CONSTANTS: tuple[float, ...] = (-0.1, -0.05, -0.01, 0.01, 0.05, 0.1)
NUMS: tuple[int, ...] = (20, 30, 40)

# Nonterminal names
NT_START = "Start"
NT_EXPR = "Expr"
NT_NUM = "Num"
NT_CONST = "Constant"
NONTERMINALS: tuple[str, ...] = (NT_START, NT_EXPR, NT_NUM, NT_CONST)


@dataclass(frozen=True)
class Symbol:
    """A node label: operator, feature, literal, or nonterminal."""

    kind: str  # "op" | "feature" | "num" | "const" | "nt"
    name: str = ""
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("op", "feature", "num", "const", "nt"):
            raise ValueError(f"unknown symbol kind {self.kind!r}")

    @property
    def op(self) -> OpInfo:
        return OP_BY_NAME[self.name]

    def text(self) -> str:
        if self.kind == "op":
            return self.name
        if self.kind == "feature":
            return self.name
        if self.kind == "num":
            return str(int(self.value))
        if self.kind == "const":
            return repr(float(self.value))
        return f"<{self.name}>"


def op_symbol(name: str) -> Symbol:
    if name not in OP_BY_NAME:
        raise ValueError(f"unknown operator {name!r}")
    return Symbol("op", name=name)


def feature_symbol(name: str) -> Symbol:
    if name not in FEATURES:
        raise ValueError(f"unknown feature {name!r}")
    return Symbol("feature", name=name)


def num_symbol(value: int) -> Symbol:
    if value <= 0:
        raise ValueError("window length must be a positive integer")
    return Symbol("num", value=float(value))


def const_symbol(value: float) -> Symbol:
    return Symbol("const", value=float(value))


def nt_symbol(name: str) -> Symbol:
    if name not in NONTERMINALS:
        raise ValueError(f"unknown nonterminal {name!r}")
    return Symbol("nt", name=name)
