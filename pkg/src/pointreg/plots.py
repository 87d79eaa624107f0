"""Figure rendering for the CLI report paths (PNG, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150
_MAX_TRACES = 40


def save_loss_trace_figure(traces, path, title="Registration loss"):
    """Overlay per-pair loss traces (at most the first 40, to stay legible)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for trace in traces[:_MAX_TRACES]:
        ax.plot(np.arange(len(trace)), trace, lw=0.8, alpha=0.6)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title(title)
    if any(v > 0 for trace in traces[:_MAX_TRACES] for v in trace):
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_pck_bar_figure(per_category, mean, path, alpha=0.1):
    """Per-category PCK bars with the overall mean as a reference line."""
    labels = list(per_category)
    values = [per_category[k] for k in labels]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(labels) + 2.0), 4.0))
    ax.bar(np.arange(len(labels)), values, color="#4878d0")
    ax.axhline(mean, color="#d65f5f", ls="--", lw=1.0, label=f"mean = {mean:.3f}")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel(f"PCK@{alpha:g}")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_ablation_figure(table, path, alpha=0.1):
    """Grouped bars: mean PCK per (loss, regime) cell."""
    losses = sorted({loss for loss, _ in table})
    regimes = sorted({regime for _, regime in table})
    width = 0.8 / len(losses)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    base = np.arange(len(regimes))
    for k, loss in enumerate(losses):
        values = [table[(loss, regime)] for regime in regimes]
        ax.bar(base + k * width, values, width=width, label=loss)
    ax.set_xticks(base + 0.4 - width / 2)
    ax.set_xticklabels(regimes)
    ax.set_xlabel("regime")
    ax.set_ylabel(f"mean PCK@{alpha:g}")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
