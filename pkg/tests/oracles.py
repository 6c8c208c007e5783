"""Independent reference implementations used only by the tests.

Everything here is written per-cell in plain Python, trading speed for
obviousness, so the vectorized library code is checked against a second
opinion rather than against itself.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from alphaforge.exprtree import Node, isomorphic, subtree_count
from alphaforge.panel import Panel

NAN = float("nan")


def _is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


# ---------------------------------------------------------------------------
# naive per-cell expression evaluation
# ---------------------------------------------------------------------------

def naive_evaluate(expr: Node, panel: Panel) -> np.ndarray:
    D, S = panel.n_days, panel.n_stocks
    out = np.empty((D, S))
    for d in range(D):
        for s in range(S):
            out[d, s] = _cell(expr, panel, d, s)
    return out


def _window(expr, panel, d, s, t):
    if d - t + 1 < 0:
        return None
    vals = [_cell(expr, panel, d - t + 1 + j, s) for j in range(t)]
    if any(_is_missing(v) for v in vals):
        return None
    return vals


def _cell(node: Node, panel: Panel, d: int, s: int) -> float:
    label = node.label
    if label.kind == "feature":
        return float(panel[label.name].values[d, s])
    if label.kind in ("num", "const"):
        return float(label.value)

    name = label.name
    if name in ("Abs", "Sign", "Log"):
        x = _cell(node.children[0], panel, d, s)
        if _is_missing(x):
            return NAN
        if name == "Abs":
            return abs(x)
        if name == "Sign":
            return (x > 0) - (x < 0)
        return math.log(x) if x > 0 else NAN
    if name == "CSRank":
        vals = [_cell(node.children[0], panel, d, j)
                for j in range(panel.n_stocks)]
        x = vals[s]
        if _is_missing(x):
            return NAN
        present = [v for v in vals if not _is_missing(v)]
        less = sum(1 for v in present if v < x)
        eq = sum(1 for v in present if v == x)
        return (less + (eq + 1) / 2.0) / len(present)
    if name in ("Add", "Mul", "Greater", "Less", "Sub", "Div", "Pow"):
        x = _cell(node.children[0], panel, d, s)
        y = _cell(node.children[1], panel, d, s)
        if _is_missing(x) or _is_missing(y):
            return NAN
        if name == "Add":
            return x + y
        if name == "Mul":
            return x * y
        if name == "Greater":
            return max(x, y)
        if name == "Less":
            return min(x, y)
        if name == "Sub":
            return x - y
        if name == "Div":
            return x / y if abs(y) >= 1e-12 else NAN
        if x <= 0:
            return NAN
        try:
            return math.exp(y * math.log(x))
        except OverflowError:
            return math.inf
    if name in ("Ref", "Delta"):
        t = int(node.children[1].label.value)
        if d - t < 0:
            return NAN
        past = _cell(node.children[0], panel, d - t, s)
        if _is_missing(past):
            return NAN
        if name == "Ref":
            return past
        now = _cell(node.children[0], panel, d, s)
        return NAN if _is_missing(now) else now - past
    if name in ("Cov", "Corr"):
        t = int(node.children[2].label.value)
        xs = _window(node.children[0], panel, d, s, t)
        ys = _window(node.children[1], panel, d, s, t)
        if xs is None or ys is None:
            return NAN
        mx, my = sum(xs) / t, sum(ys) / t
        cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / (t - 1)
        if name == "Cov":
            return cov
        sx = math.sqrt(sum((a - mx) ** 2 for a in xs) / (t - 1))
        sy = math.sqrt(sum((b - my) ** 2 for b in ys) / (t - 1))
        if sx < 1e-12 or sy < 1e-12:
            return NAN
        return cov / (sx * sy)

    # single-series rolling operators
    t = int(node.children[1].label.value)
    xs = _window(node.children[0], panel, d, s, t)
    if xs is None:
        return NAN
    if name == "Rank":
        last = xs[-1]
        less = sum(1 for v in xs if v < last)
        eq = sum(1 for v in xs if v == last)
        return (less + (eq + 1) / 2.0) / t
    if name == "WMA":
        weights = list(range(1, t + 1))  # oldest 1 .. newest t
        return sum(w * v for w, v in zip(weights, xs)) / sum(weights)
    if name == "EMA":
        a = 2.0 / (t + 1.0)
        acc = xs[0]
        for v in xs[1:]:
            acc = a * v + (1.0 - a) * acc
        return acc
    if name == "Mean":
        return sum(xs) / t
    if name == "Sum":
        return sum(xs)
    if name in ("Std", "Var"):
        m = sum(xs) / t
        var = sum((v - m) ** 2 for v in xs) / (t - 1)
        return var if name == "Var" else math.sqrt(var)
    if name in ("Skew", "Kurt"):
        m = sum(xs) / t
        m2 = sum((v - m) ** 2 for v in xs) / t
        if m2 == 0.0:
            return NAN  # constant window: 0/0 moment ratio
        if name == "Skew":
            m3 = sum((v - m) ** 3 for v in xs) / t
            return m3 / m2 ** 1.5
        m4 = sum((v - m) ** 4 for v in xs) / t
        return m4 / m2 ** 2 - 3.0
    if name == "Max":
        return max(xs)
    if name == "Min":
        return min(xs)
    if name == "Med":
        ordered = sorted(xs)
        mid = t // 2
        return ordered[mid] if t % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    if name == "Mad":
        m = sum(xs) / t
        return sum(abs(v - m) for v in xs) / t
    raise AssertionError(f"oracle has no rule for {name}")


# ---------------------------------------------------------------------------
# brute-force tree similarity
# ---------------------------------------------------------------------------

def all_subtrees(tree: Node) -> list[Node]:
    out = [tree]
    for c in tree.children:
        out.extend(all_subtrees(c))
    return out


def brute_similarity(t1: Node, t2: Node) -> float:
    best = 0
    for a in all_subtrees(t1):
        for b in all_subtrees(t2):
            if subtree_count(a) > best and isomorphic(a, b):
                best = subtree_count(a)
    return best / max(subtree_count(t1), subtree_count(t2))


# ---------------------------------------------------------------------------
# exhaustive derivation enumeration for the counting recurrences
# ---------------------------------------------------------------------------

def enumerate_syn_counts(census, n_max: int) -> list[int]:
    """Number of syntactically valid derivations per node-count length.

    Trees are materialized for lengths below n_max and streamed at the
    top, so every derivation is visited exactly once.
    """
    T = census.n_features + census.n_constants + census.n_windows
    unary = [("u", i) for i in range(census.n_unary)]
    binary = [("b", i) for i in range(census.n_binary + census.n_binary_asym
                                      + census.n_rolling)]
    paired = [("p", i) for i in range(census.n_paired)]

    lists: dict[int, list] = {1: [("t", i) for i in range(T)]}

    def generate(n):
        if n == 1:
            yield from lists[1]
            return
        for op in unary:
            for sub in lists[n - 1]:
                yield (op, sub)
        for op in binary:
            for i in range(1, n - 1):
                for left, right in itertools.product(lists[i],
                                                     lists[n - 1 - i]):
                    yield (op, left, right)
        for op in paired:
            for i in range(1, n - 1):
                for j in range(1, n - 1 - i):
                    k = n - 1 - i - j
                    for a, b, c in itertools.product(lists[i], lists[j],
                                                     lists[k]):
                        yield (op, a, b, c)

    counts = [0] * (n_max + 1)
    counts[1] = T
    for n in range(2, n_max + 1):
        if n < n_max:
            lists[n] = list(generate(n))
            counts[n] = len(lists[n])
        else:
            counts[n] = sum(1 for _ in generate(n))
    return counts


def enumerate_sem_counts(census, n_max: int) -> list[int]:
    """Number of operand-typed derivations per node-count length."""
    unary = [("u", i) for i in range(census.n_unary)]
    b_all = [("b", i) for i in range(census.n_binary + census.n_binary_asym)]
    b_asym = [("ba", i) for i in range(census.n_binary_asym)]
    rolling = [("r", i) for i in range(census.n_rolling)]
    paired = [("p", i) for i in range(census.n_paired)]
    consts = [("c", i) for i in range(census.n_constants)]
    windows = [("n", i) for i in range(census.n_windows)]

    lists: dict[int, list] = {1: [("f", i) for i in range(census.n_features)]}

    def generate(n):
        if n == 1:
            yield from lists[1]
            return
        for op in unary:
            for sub in lists[n - 1]:
                yield (op, sub)
        for op in b_all:
            for i in range(1, n - 1):
                for left, right in itertools.product(lists[i],
                                                     lists[n - 1 - i]):
                    yield (op, left, right)
            if n >= 3:
                for left, c in itertools.product(lists[n - 2], consts):
                    yield (op, left, c)
        if n >= 3:
            for op in b_asym:
                for c, right in itertools.product(consts, lists[n - 2]):
                    yield (op, c, right)
            for op in rolling:
                for sub, w in itertools.product(lists[n - 2], windows):
                    yield (op, sub, w)
            for op in paired:
                for i in range(1, n - 2):
                    for a, b, w in itertools.product(lists[i],
                                                     lists[n - 2 - i],
                                                     windows):
                        yield (op, a, b, w)

    counts = [0] * (n_max + 1)
    counts[1] = census.n_features
    for n in range(2, n_max + 1):
        if n < n_max:
            lists[n] = list(generate(n))
            counts[n] = len(lists[n])
        else:
            counts[n] = sum(1 for _ in generate(n))
    return counts


# ---------------------------------------------------------------------------
# correlation references
# ---------------------------------------------------------------------------

def pearson(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    num = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    dx = math.sqrt(sum((a - mx) ** 2 for a in xs))
    dy = math.sqrt(sum((b - my) ** 2 for b in ys))
    if dx == 0 or dy == 0:
        return None
    return num / (dx * dy)


def average_ranks(xs):
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for p in range(i, j + 1):
            ranks[order[p]] = avg
        i = j + 1
    return ranks
