"""Tree-structured state encoder with policy and value heads.

The encoder recursively folds an expression tree bottom-up.  Symmetric
binary operators (Add, Mul, Greater, Less) are aggregated with a
Child-Sum cell so that operand order cannot change the encoding; Cov and
Corr first average their two series operands and then apply the N-ary
cell together with the window child; every other operator uses the
position-sensitive N-ary cell.  Leaves run the N-ary cell with no
children.

Forward and reverse passes are written directly in numpy; the reverse
pass follows the forward recursion in reverse topological order, which
keeps every reduction order fixed and the outputs bit-reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import symbols as sy
from .exprtree import Node

MAX_CHILDREN = 3
GATES = ("i", "f", "o", "u")


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

def _vocab() -> dict[str, int]:
    keys = [f"op:{o.name}" for o in sy.OPERATORS]
    keys += [f"feat:{f}" for f in sy.FEATURES]
    keys += [f"num:{n}" for n in sy.NUMS]
    keys += [f"const:{c!r}" for c in sy.CONSTANTS]
    keys += [f"nt:{n}" for n in sy.NONTERMINALS]
    keys += ["num:other", "const:other"]
    return {k: i for i, k in enumerate(keys)}

VOCAB = _vocab()


def symbol_index(label: sy.Symbol) -> int:
    if label.kind == "op":
        return VOCAB[f"op:{label.name}"]
    if label.kind == "feature":
        return VOCAB[f"feat:{label.name}"]
    if label.kind == "nt":
        return VOCAB[f"nt:{label.name}"]
    if label.kind == "num":
        return VOCAB.get(f"num:{int(label.value)}", VOCAB["num:other"])
    return VOCAB.get(f"const:{float(label.value)!r}", VOCAB["const:other"])


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class NetConfig:
    n_actions: int
    d_emb: int = 128
    d_h: int = 128
    head_hidden: int = 64
    dropout: float = 0.1
    l2: float = 1e-4
    learning_rate: float = 1e-4


def init_params(cfg: NetConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(cfg.d_h)

    def u(*shape):
        return rng.uniform(-bound, bound, shape)

    p: dict[str, np.ndarray] = {"emb": u(len(VOCAB), cfg.d_emb)}
    for g in GATES:
        p[f"nary.W_{g}"] = u(cfg.d_h, cfg.d_emb)
        p[f"nary.b_{g}"] = np.full(cfg.d_h, 1.0) if g == "f" else np.zeros(cfg.d_h)
        for k in range(MAX_CHILDREN):
            p[f"nary.U_{g}{k}"] = u(cfg.d_h, cfg.d_h)
        p[f"cs.W_{g}"] = u(cfg.d_h, cfg.d_emb)
        p[f"cs.U_{g}"] = u(cfg.d_h, cfg.d_h)
        p[f"cs.b_{g}"] = np.full(cfg.d_h, 1.0) if g == "f" else np.zeros(cfg.d_h)
    hh = cfg.head_hidden
    p["pol.W1"] = u(hh, cfg.d_h)
    p["pol.b1"] = np.zeros(hh)
    p["pol.W2"] = u(cfg.n_actions, hh)
    p["pol.b2"] = np.zeros(cfg.n_actions)
    p["val.W1"] = u(hh, cfg.d_h)
    p["val.b1"] = np.zeros(hh)
    p["val.W2"] = u(hh, hh)
    p["val.b2"] = np.zeros(hh)
    p["val.W3"] = u(1, hh)
    p["val.b3"] = np.zeros(1)
    return p


def zero_grads(params) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


from scipy.special import expit as _sigmoid  # noqa: E402


# ---------------------------------------------------------------------------
# encoder forward
# ---------------------------------------------------------------------------

@dataclass
class _NodeCache:
    kind: str                      # "nary" | "cs"
    vocab_idx: int
    x: np.ndarray
    drop_mask: np.ndarray | None
    children: list                 # list of _NodeCache
    agg_pair: bool                 # Cov/Corr pseudo-child aggregation
    h_list: list                   # child hidden states fed to the cell
    c_list: list
    gates: dict = field(default_factory=dict)
    c: np.ndarray | None = None
    h: np.ndarray | None = None
    hbar: np.ndarray | None = None


def _routing(node: Node) -> tuple[str, bool]:
    if node.label.kind == "op":
        op = node.label.op
        if op.symmetric:
            return "cs", False
        if op.pair_symmetric:
            return "nary", True
    return "nary", False


def _forward_node(node: Node, params, cfg: NetConfig, drop_rng) -> _NodeCache:
    kind, agg_pair = _routing(node)
    child_caches = [_forward_node(c, params, cfg, drop_rng) for c in node.children]

    idx = symbol_index(node.label)
    x = params["emb"][idx]
    mask = None
    if drop_rng is not None and cfg.dropout > 0:
        keep = 1.0 - cfg.dropout
        mask = (drop_rng.random(x.shape) < keep) / keep
        x = x * mask

    hs = [c.h for c in child_caches]
    cs_ = [c.c for c in child_caches]
    if agg_pair:
        hs = [(hs[0] + hs[1]) / 2.0, hs[2]]
        cs_ = [(cs_[0] + cs_[1]) / 2.0, cs_[2]]

    cache = _NodeCache(kind, idx, x, mask, child_caches, agg_pair, hs, cs_)
    if kind == "cs":
        _cs_forward(cache, params, cfg)
    else:
        _nary_forward(cache, params, cfg)
    return cache


def _nary_forward(nc: _NodeCache, p, cfg):
    pre = {}
    for g in ("i", "o", "u"):
        a = p[f"nary.W_{g}"] @ nc.x + p[f"nary.b_{g}"]
        for k, h in enumerate(nc.h_list):
            a = a + p[f"nary.U_{g}{k}"] @ h
        pre[g] = a
    i = _sigmoid(pre["i"])
    o = _sigmoid(pre["o"])
    u = np.tanh(pre["u"])
    fks = []
    base_f = p["nary.W_f"] @ nc.x + p["nary.b_f"]
    for k, h in enumerate(nc.h_list):
        fks.append(_sigmoid(base_f + p[f"nary.U_f{k}"] @ h))
    c = i * u
    for fk, ck in zip(fks, nc.c_list):
        c = c + fk * ck
    nc.gates = {"i": i, "o": o, "u": u, "f": fks}
    nc.c = c
    nc.h = o * np.tanh(c)


def _cs_forward(nc: _NodeCache, p, cfg):
    m = len(nc.h_list)
    hbar = sum(nc.h_list) / m
    i = _sigmoid(p["cs.W_i"] @ nc.x + p["cs.U_i"] @ hbar + p["cs.b_i"])
    o = _sigmoid(p["cs.W_o"] @ nc.x + p["cs.U_o"] @ hbar + p["cs.b_o"])
    u = np.tanh(p["cs.W_u"] @ nc.x + p["cs.U_u"] @ hbar + p["cs.b_u"])
    fks = [
        _sigmoid(p["cs.W_f"] @ nc.x + p["cs.U_f"] @ h + p["cs.b_f"])
        for h in nc.h_list
    ]
    # sum the forget products before adding i*u so that swapping the two
    # children of a symmetric operator is bit-exactly invariant
    fc = fks[0] * nc.c_list[0]
    for fk, ck in zip(fks[1:], nc.c_list[1:]):
        fc = fc + fk * ck
    c = i * u + fc
    nc.gates = {"i": i, "o": o, "u": u, "f": fks}
    nc.hbar = hbar
    nc.c = c
    nc.h = o * np.tanh(c)


# ---------------------------------------------------------------------------
# encoder backward
# ---------------------------------------------------------------------------

def _backward_node(nc: _NodeCache, dh, dc, params, grads):
    g = nc.gates
    tc = np.tanh(nc.c)
    do = dh * tc
    dc = dc + dh * g["o"] * (1.0 - tc ** 2)
    di = dc * g["u"]
    du = dc * g["i"]
    dfks = [dc * ck for ck in nc.c_list]
    dc_children = [dc * fk for fk in g["f"]]

    da = {
        "i": di * g["i"] * (1.0 - g["i"]),
        "o": do * g["o"] * (1.0 - g["o"]),
        "u": du * (1.0 - g["u"] ** 2),
        "f": [dfk * fk * (1.0 - fk) for dfk, fk in zip(dfks, g["f"])],
    }

    dx = np.zeros_like(nc.x)
    dh_children = [np.zeros_like(h) for h in nc.h_list]

    if nc.kind == "nary":
        for gate in ("i", "o", "u"):
            a = da[gate]
            grads[f"nary.W_{gate}"] += np.outer(a, nc.x)
            grads[f"nary.b_{gate}"] += a
            dx += params[f"nary.W_{gate}"].T @ a
            for k, h in enumerate(nc.h_list):
                grads[f"nary.U_{gate}{k}"] += np.outer(a, h)
                dh_children[k] += params[f"nary.U_{gate}{k}"].T @ a
        for k, (a, h) in enumerate(zip(da["f"], nc.h_list)):
            grads["nary.W_f"] += np.outer(a, nc.x)
            grads["nary.b_f"] += a
            dx += params["nary.W_f"].T @ a
            grads[f"nary.U_f{k}"] += np.outer(a, h)
            dh_children[k] += params[f"nary.U_f{k}"].T @ a
    else:
        m = len(nc.h_list)
        dhbar = np.zeros_like(nc.hbar)
        for gate in ("i", "o", "u"):
            a = da[gate]
            grads[f"cs.W_{gate}"] += np.outer(a, nc.x)
            grads[f"cs.b_{gate}"] += a
            grads[f"cs.U_{gate}"] += np.outer(a, nc.hbar)
            dx += params[f"cs.W_{gate}"].T @ a
            dhbar += params[f"cs.U_{gate}"].T @ a
        for k, (a, h) in enumerate(zip(da["f"], nc.h_list)):
            grads["cs.W_f"] += np.outer(a, nc.x)
            grads["cs.b_f"] += a
            grads["cs.U_f"] += np.outer(a, h)
            dx += params["cs.W_f"].T @ a
            dh_children[k] += params["cs.U_f"].T @ a
        for k in range(m):
            dh_children[k] += dhbar / m

    if nc.drop_mask is not None:
        grads["emb"][nc.vocab_idx] += dx * nc.drop_mask
    else:
        grads["emb"][nc.vocab_idx] += dx

    # undo the Cov/Corr pseudo-child aggregation
    if nc.agg_pair:
        half_h = dh_children[0] / 2.0
        half_c = dc_children[0] / 2.0
        dh_children = [half_h, half_h, dh_children[1]]
        dc_children = [half_c, half_c, dc_children[1]]

    for child, dhk, dck in zip(nc.children, dh_children, dc_children):
        _backward_node(child, dhk, dck, params, grads)


# ---------------------------------------------------------------------------
# heads
# ---------------------------------------------------------------------------

def encode(tree: Node, params, cfg: NetConfig, drop_rng=None):
    cache = _forward_node(tree, params, cfg, drop_rng)
    return cache.h, cache


def masked_softmax(logits: np.ndarray, valid_ids) -> np.ndarray:
    """Distribution over all actions; exactly zero off the valid set."""
    out = np.zeros_like(logits)
    sel = logits[list(valid_ids)]
    sel = np.exp(sel - sel.max())
    out[list(valid_ids)] = sel / sel.sum()
    return out


def _heads_forward(h, params):
    pz1 = params["pol.W1"] @ h + params["pol.b1"]
    pa1 = np.maximum(pz1, 0.0)
    logits = params["pol.W2"] @ pa1 + params["pol.b2"]
    vz1 = params["val.W1"] @ h + params["val.b1"]
    va1 = np.maximum(vz1, 0.0)
    vz2 = params["val.W2"] @ va1 + params["val.b2"]
    va2 = np.maximum(vz2, 0.0)
    value = float((params["val.W3"] @ va2 + params["val.b3"])[0])
    return logits, value, (pz1, pa1, vz1, va1, vz2, va2)


def _heads_backward(dlogits, dvalue, h, hcache, params, grads):
    pz1, pa1, vz1, va1, vz2, va2 = hcache
    dh = np.zeros_like(h)

    grads["pol.W2"] += np.outer(dlogits, pa1)
    grads["pol.b2"] += dlogits
    dpa1 = params["pol.W2"].T @ dlogits
    dpz1 = dpa1 * (pz1 > 0)
    grads["pol.W1"] += np.outer(dpz1, h)
    grads["pol.b1"] += dpz1
    dh += params["pol.W1"].T @ dpz1

    dva2 = params["val.W3"][0] * dvalue
    grads["val.W3"] += (va2 * dvalue)[None, :]
    grads["val.b3"] += np.array([dvalue])
    dvz2 = dva2 * (vz2 > 0)
    grads["val.W2"] += np.outer(dvz2, va1)
    grads["val.b2"] += dvz2
    dva1 = params["val.W2"].T @ dvz2
    dvz1 = dva1 * (vz1 > 0)
    grads["val.W1"] += np.outer(dvz1, h)
    grads["val.b1"] += dvz1
    dh += params["val.W1"].T @ dvz1
    return dh


def policy_and_value(tree: Node, valid_ids, params, cfg: NetConfig,
                     drop_rng=None):
    """Masked policy over the valid actions and a scalar value estimate."""
    h, _ = encode(tree, params, cfg, drop_rng)
    logits, value, _ = _heads_forward(h, params)
    if valid_ids:
        probs = masked_softmax(logits, valid_ids)
    else:
        probs = np.zeros_like(logits)
    return probs, value


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainSample:
    tree: Node
    valid_ids: list[int]
    pi: np.ndarray      # aligned with valid_ids, sums to 1
    z: float


def batch_loss_and_grads(batch, params, cfg: NetConfig, drop_rng=None):
    grads = zero_grads(params)
    value_loss = policy_loss = 0.0
    B = len(batch)
    for sample in batch:
        cache = _forward_node(sample.tree, params, cfg, drop_rng)
        h = cache.h
        logits, value, hcache = _heads_forward(h, params)
        probs = masked_softmax(logits, sample.valid_ids)

        value_loss += (sample.z - value) ** 2
        sel = probs[sample.valid_ids]
        policy_loss += -float(sample.pi @ np.log(np.maximum(sel, 1e-300)))

        dvalue = 2.0 * (value - sample.z) / B
        dlogits = np.zeros_like(logits)
        dlogits[sample.valid_ids] = (sel - sample.pi) / B
        dh = _heads_backward(dlogits, dvalue, h, hcache, params, grads)
        _backward_node(cache, dh, np.zeros_like(cache.c), params, grads)

    l2_term = 0.0
    for k, v in params.items():
        l2_term += float((v ** 2).sum())
        grads[k] += 2.0 * cfg.l2 * v
    loss = value_loss / B + policy_loss / B + cfg.l2 * l2_term
    parts = {"value": value_loss / B, "policy": policy_loss / B,
             "l2": cfg.l2 * l2_term}
    return loss, grads, parts


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999,
              eps=1e-8):
    state.step += 1
    t = state.step
    for k, g in grads.items():
        m = state.m.setdefault(k, np.zeros_like(g))
        v = state.v.setdefault(k, np.zeros_like(g))
        m += (1 - beta1) * (g - m)
        v += (1 - beta2) * (g * g - v)
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        params[k] -= lr * mhat / (np.sqrt(vhat) + eps)


def train_step(batch, params, opt_state: AdamState, cfg: NetConfig,
               drop_rng=None):
    """One optimizer step; rejects the update on a non-finite loss."""
    loss, grads, parts = batch_loss_and_grads(batch, params, cfg, drop_rng)
    finite = np.isfinite(loss) and all(
        np.isfinite(g).all() for g in grads.values()
    )
    if not finite:
        parts["rejected"] = 1.0
        return loss, parts
    adam_step(params, grads, opt_state, cfg.learning_rate)
    for v in params.values():
        assert np.isfinite(v).all()
    return loss, parts


# ---------------------------------------------------------------------------
# serialization: magic, version, count, then (name, shape, float64 rows)
# ---------------------------------------------------------------------------

_MAGIC = b"AFNN"
_VERSION = 1


def save_params(params, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype=np.float64)
            nb = name.encode()
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a parameter file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported parameter file version {version}")
        params = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode()
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n), dtype=np.float64)
            params[name] = data.reshape(shape).copy()
    return params
