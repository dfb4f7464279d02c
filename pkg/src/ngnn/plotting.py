"""Figures written next to the delimited reports."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "NGNN": {"color": "#d62728", "marker": "o"},
    "GGNN": {"color": "#1f77b4", "marker": "s"},
    "EGNN": {"color": "#2ca02c", "marker": "^"},
}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "ngnn",
}


def plot_scaling(records, path, title: str | None = None) -> None:
    """Parameter size and running time against graph size, one line per variant."""
    with plt.rc_context(RC):
        fig, (ax_p, ax_t) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        for variant in sorted({r.variant for r in records}):
            rows = sorted((r for r in records if r.variant == variant), key=lambda r: r.n)
            n = [r.n for r in rows]
            style = STYLE.get(variant, {})
            ax_p.plot(n, [r.param_count for r in rows], label=variant, markersize=3, **style)
            ax_t.plot(n, [1e3 * r.median_time for r in rows], label=variant, markersize=3, **style)
        ax_p.set_xlabel("number of nodes")
        ax_p.set_ylabel("parameters")
        ax_p.set_title("(a) parameter size")
        ax_t.set_xlabel("number of nodes")
        ax_t.set_ylabel("forward+backward (ms, median)")
        ax_t.set_title("(b) running time")
        ax_p.legend(frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, metadata=_metadata(path))
        plt.close(fig)


def plot_training(history: Sequence, path) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.5, 2.6))
        epochs = [h.epoch for h in history]
        ax.plot(epochs, [h.train_loss for h in history], marker="o", markersize=3, label="train")
        ax.plot(epochs, [h.valid_loss for h in history], marker="s", markersize=3, label="valid")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss per pair")
        ax.set_yscale("log")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata=_metadata(path))
        plt.close(fig)


def _metadata(path) -> dict:
    # fixed metadata keeps PNG/PDF output byte-stable across runs
    p = str(path).lower()
    if p.endswith(".png"):
        return {"Software": None}
    if p.endswith(".pdf"):
        return {"Creator": None, "Producer": None, "CreationDate": None}
    return {}
