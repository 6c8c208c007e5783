"""Run configuration: documented defaults, INI parsing, echoing.

The config file is standard INI (configparser).  Every key below has a
default; a file only needs the keys it overrides.  Example::

    [grammar]
    level = semk
    max_length = 10

    [miner]
    epochs = 30

    [run]
    seed = 7
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from . import neural, search
from .miner import MinerConfig


class ConfigError(ValueError):
    pass


# section -> key -> default; the default's type fixes the key's type.
DEFAULTS: dict[str, dict] = {
    "grammar": {
        "level": "semk",        # syn | sem | semk
        "max_length": 10,       # expression length bound K (0 disables)
        "b_ref": 40.0,          # branching reference for the PUCT scale
    },
    "data": {
        "csv_path": "",         # input panel CSV
        "start": "",            # inclusive ISO date filters (blank = none)
        "end": "",
        "valid_start": "",      # optional validation slice
        "valid_end": "",
    },
    "target": {
        "horizon": 20,          # forward-return horizon in trading days
    },
    "pool": {
        "capacity": 10,
        "opt_steps": 200,       # gradient steps per weight refit
        "step_size": 0.01,
    },
    "nn": {
        "d_emb": 128,
        "d_h": 128,
        "head_hidden": 64,
        "dropout": 0.1,
        "learning_rate": 1e-4,
        "l2": 1e-4,
    },
    "mcts": {
        "simulations": 64,
        "c_puct": 1.0,
        "temperature": 1.0,
        "parallelism": 8,       # leaves gathered per virtual-loss round
        "eval_batch": 2,        # accepted for compatibility; evaluations
                                # run synchronously in this implementation
    },
    "miner": {
        "epochs": 100,
        "trajectories_per_epoch": 100,
        "batch_size": 64,
        "buffer_size": 20000,
        "train_batches_per_epoch": 16,
        "explore_frac": 0.5,    # share of trajectories sampled at temperature
        "early_stop_frac": 0.2, # patience as a fraction of epochs
        "workers": 1,           # reserved; mining is single-process
    },
    "backtest": {
        "k": 60,
        "n": 5,
        "fee_rate": 0.0,
        "risk_free_daily": 0.0,
    },
    "run": {
        "seed": 0,
    },
}


@dataclass
class RunConfig:
    values: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        merged = {s: dict(kv) for s, kv in DEFAULTS.items()}
        for section, kv in self.values.items():
            if section not in merged:
                raise ConfigError(f"unknown config section [{section}]")
            for key, val in kv.items():
                if key not in merged[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                merged[section][key] = _coerce(section, key, val)
        self.values = merged

    def get(self, section: str, key: str):
        return self.values[section][key]

    # typed views -----------------------------------------------------------

    def net_config(self, n_actions: int) -> neural.NetConfig:
        nn = self.values["nn"]
        return neural.NetConfig(
            n_actions=n_actions,
            d_emb=nn["d_emb"],
            d_h=nn["d_h"],
            head_hidden=nn["head_hidden"],
            dropout=nn["dropout"],
            l2=nn["l2"],
            learning_rate=nn["learning_rate"],
        )

    def mcts_config(self, deterministic: bool = False) -> search.MCTSConfig:
        m = self.values["mcts"]
        return search.MCTSConfig(
            simulations=m["simulations"],
            c_puct=m["c_puct"],
            temperature=m["temperature"],
            parallelism=1 if deterministic else m["parallelism"],
        )

    def miner_config(self) -> MinerConfig:
        m = self.values["miner"]
        p = self.values["pool"]
        return MinerConfig(
            epochs=m["epochs"],
            trajectories_per_epoch=m["trajectories_per_epoch"],
            pool_capacity=p["capacity"],
            batch_size=m["batch_size"],
            buffer_size=m["buffer_size"],
            train_batches_per_epoch=m["train_batches_per_epoch"],
            explore_frac=m["explore_frac"],
            early_stop_frac=m["early_stop_frac"],
            pool_opt_steps=p["opt_steps"],
            pool_step_size=p["step_size"],
        )

    def grammar_args(self):
        g = self.values["grammar"]
        max_length = g["max_length"] if g["max_length"] > 0 else None
        return g["level"], max_length, g["b_ref"]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section, kv in self.values.items():
            cp[section] = {k: str(v) for k, v in kv.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _coerce(section: str, key: str, raw):
    want = type(DEFAULTS[section][key])
    if isinstance(raw, want) and not (want is int and isinstance(raw, bool)):
        return raw
    text = str(raw)
    try:
        if want is int:
            return int(text)
        if want is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(
            f"config key {section}.{key} expects {want.__name__}, "
            f"got {raw!r}"
        ) from None


def load_config(path: str | None = None) -> RunConfig:
    if path is None:
        return RunConfig()
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    values = {s: dict(cp[s]) for s in cp.sections()}
    return RunConfig(values)


def describe_defaults() -> str:
    """One line per key: section.key = default."""
    lines = []
    for section, kv in DEFAULTS.items():
        for key, val in kv.items():
            lines.append(f"{section}.{key} = {val}")
    return "\n".join(lines)
