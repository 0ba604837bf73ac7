"""Figure rendering for experiment outputs (PNG next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def render_training_error(path, curves: dict) -> None:
    """Training error vs iteration, one line per run.

    `curves` maps a label to (iterations, errors).
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, (its, errs) in sorted(curves.items()):
        ax.plot(its, errs, label=label, linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("training error")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_layer_counts(path, iterations, cumulative, title: str) -> None:
    """Running per-layer update counts for one run."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k in range(cumulative.shape[1]):
        ax.plot(iterations, cumulative[:, k], label=f"layer {k + 1}", linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("cumulative updates")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
