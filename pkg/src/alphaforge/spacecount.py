"""Exact counting of expression search spaces.

Counts derivations by expression length, where the length of an
expression is its prefix-notation token count (one per tree node).  All
arithmetic uses Python integers, so results are exact at any n.

Three spaces are compared:

* sigma: unconstrained symbol strings, r_n = r^n;
* syn:   arity-consistent trees; terminals are features, constants and
         window literals alike, rolling operators take two operands and
         paired rolling three;
* sem:   operand-typed trees; an expression terminates only in a
         feature, constants enter through the designated binary slots,
         and windows only through rolling slots.

In the sem recurrence every binary operator admits both the
(expr, expr) and the (expr, constant) shapes, and the asymmetric ones
additionally (constant, expr), mirroring the grammar.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import symbols as sy
from .grammar import Grammar


@dataclass(frozen=True)
class GrammarCensus:
    n_unary: int
    n_binary: int
    n_binary_asym: int
    n_rolling: int
    n_paired: int
    n_features: int
    n_constants: int
    n_windows: int

    def __post_init__(self):
        for f in self.__dataclass_fields__:
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be nonnegative")

    @property
    def total_symbols(self) -> int:
        return (self.n_unary + self.n_binary + self.n_binary_asym
                + self.n_rolling + self.n_paired + self.n_features
                + self.n_constants + self.n_windows)

    @classmethod
    def from_grammar(cls, grammar: Grammar) -> "GrammarCensus":
        ops = {r.op_name for r in grammar.rules if r.op_name is not None}
        fam = {f: 0 for f in (sy.UNARY, sy.BINARY, sy.BINARY_ASYM,
                              sy.ROLLING, sy.PAIRED_ROLLING)}
        for name in ops:
            fam[sy.OP_BY_NAME[name].family] += 1
        terminals = [r.terminal for r in grammar.rules
                     if r.terminal is not None]
        return cls(
            n_unary=fam[sy.UNARY],
            n_binary=fam[sy.BINARY],
            n_binary_asym=fam[sy.BINARY_ASYM],
            n_rolling=fam[sy.ROLLING],
            n_paired=fam[sy.PAIRED_ROLLING],
            n_features=sum(1 for t in terminals if t.kind == "feature"),
            n_constants=sum(1 for t in terminals if t.kind == "const"),
            n_windows=sum(1 for t in terminals if t.kind == "num"),
        )


def count_sigma(census: GrammarCensus, n: int) -> tuple[int, int]:
    """(r^n, sum of r^i for i <= n) as exact integers."""
    if n < 1:
        raise ValueError("n must be >= 1")
    r = census.total_symbols
    cumulative = sum(r ** i for i in range(1, n + 1))
    return r ** n, cumulative


def _syn_series(census: GrammarCensus, n: int) -> list[int]:
    T = census.n_features + census.n_constants + census.n_windows
    U = census.n_unary
    Q = census.n_binary + census.n_binary_asym
    R = census.n_rolling
    P = census.n_paired
    h = [0] * (n + 1)
    if n >= 1:
        h[1] = T
    for m in range(2, n + 1):
        total = U * h[m - 1]
        total += (Q + R) * sum(h[i] * h[m - 1 - i] for i in range(1, m - 1))
        total += P * sum(
            h[i] * h[j] * h[m - 1 - i - j]
            for i in range(1, m - 1)
            for j in range(1, m - 1 - i)
        )
        h[m] = total
    return h


def _sem_series(census: GrammarCensus, n: int) -> list[int]:
    U = census.n_unary
    B_all = census.n_binary + census.n_binary_asym
    B_asym = census.n_binary_asym
    R = census.n_rolling
    P = census.n_paired
    F = census.n_features
    C = census.n_constants
    N = census.n_windows
    f = [0] * (n + 1)
    if n >= 1:
        f[1] = F
    for m in range(2, n + 1):
        total = U * f[m - 1]
        total += B_all * sum(f[i] * f[m - 1 - i] for i in range(1, m - 1))
        if m >= 3:
            total += B_all * C * f[m - 2]
            total += B_asym * C * f[m - 2]
            total += R * N * f[m - 2]
            total += P * N * sum(
                f[i] * f[m - 2 - i] for i in range(1, m - 2)
            )
        f[m] = total
    return f


def count_syn(census: GrammarCensus, n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    return _syn_series(census, n)[n]


def count_sem(census: GrammarCensus, n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    return _sem_series(census, n)[n]


def cumulative_table(census: GrammarCensus, n_max: int,
                     k: int | None = None) -> list[dict]:
    """Rows (n, cum_sigma, cum_syn, cum_sem, cum_sem_k).

    The bounded column accumulates sem counts only up to length k and
    stays constant beyond it.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    h = _syn_series(census, n_max)
    f = _sem_series(census, n_max)
    r = census.total_symbols
    rows = []
    cum_r = cum_h = cum_f = cum_fk = 0
    for n in range(1, n_max + 1):
        cum_r += r ** n
        cum_h += h[n]
        cum_f += f[n]
        if k is None or n <= k:
            cum_fk += f[n]
        rows.append({
            "n": n,
            "cum_sigma": cum_r,
            "cum_syn": cum_h,
            "cum_sem": cum_f,
            "cum_sem_k": cum_fk,
        })
    return rows


def table_csv(rows: list[dict]) -> str:
    header = ["n", "cum_sigma", "cum_syn", "cum_sem", "cum_sem_k"]
    lines = [",".join(header)]
    lines += [",".join(str(row[c]) for c in header) for row in rows]
    return "\n".join(lines)
