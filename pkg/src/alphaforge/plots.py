"""Figure rendering for report outputs.

Each report command writes its delimited data first; these helpers render
a PNG next to it so runs are inspectable without extra tooling.  The Agg
backend keeps rendering headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_training_curve(history: list[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    epochs = [row["epoch"] for row in history]
    if "train_ic" in history[0]:
        ax.plot(epochs, [row["train_ic"] for row in history],
                label="train combined IC")
        ax.plot(epochs, [row["valid_ic"] for row in history],
                label="validation combined IC")
    else:
        ax.plot(epochs, [row["best_ic"] for row in history],
                label="best |IC|")
    ax.set_xlabel("epoch")
    ax.set_ylabel("IC")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_nav(nav: list[float], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(range(len(nav)), nav)
    ax.set_xlabel("day")
    ax.set_ylabel("net asset value")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_space_growth(rows: list[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ns = [row["n"] for row in rows]
    for col, label in (
        ("cum_sigma", "unconstrained"),
        ("cum_syn", "syntactic"),
        ("cum_sem", "semantic"),
    ):
        ax.plot(ns, [float(row[col]) for row in rows], label=label)
    ax.plot(ns, [float(row["cum_sem_k"]) for row in rows],
            "r--", label="semantic, bounded")
    ax.set_yscale("log")
    ax.set_xlabel("expression length")
    ax.set_ylabel("cumulative expression count")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
