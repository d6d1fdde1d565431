"""File-output matplotlib rendering for reports, training curves, and sweeps.

Only the CLI calls into this module; the core report path stays
plotting-free. The Agg backend keeps rendering headless.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .explain import ExplanationReport
from .training import HistoryRow


def render_attention_figure(report: ExplanationReport, path) -> None:
    """Per-branch heat map of attention weights, layers by items."""
    branches = [("tweets", report.tweet_trace)]
    if report.mcm_trace is not None:
        branches.append(("concept mappings", report.mcm_trace))
    fig, axes = plt.subplots(len(branches), 1, figsize=(8, 2.4 * len(branches)), squeeze=False)
    for ax, (title, trace) in zip(axes[:, 0], branches):
        grid = np.stack([w[trace.mask] for w in trace.weights])
        im = ax.imshow(grid, aspect="auto", cmap="magma", vmin=0.0)
        ax.set_title(f"{report.user_id}: {title}")
        ax.set_xlabel("item")
        ax.set_yticks(range(grid.shape[0]), [f"layer {i + 1}" for i in range(grid.shape[0])])
        fig.colorbar(im, ax=ax, label="attention")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_history_figure(history: Sequence[HistoryRow], path) -> None:
    """Training loss per step, with epoch-end validation F1 on a twin axis."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot([r.step for r in history], [r.train_loss for r in history], label="train loss")
    ax.set_xlabel("step")
    ax.set_ylabel("mean cross entropy")
    scored = [(r.step, r.val_f1) for r in history if r.val_f1 is not None]
    if scored:
        ax2 = ax.twinx()
        ax2.plot(*zip(*scored), color="tab:orange", marker="o", label="val F1")
        ax2.set_ylabel("validation F1")
        ax2.set_ylim(0.0, 1.05)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(rows: Sequence[tuple[int, int, float]], path) -> None:
    """Validation F1 against layer depth; one marker per seed, line through means."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    depths = sorted({layers for layers, _, _ in rows})
    for layers, seed, f1 in rows:
        ax.plot(layers, f1, "o", color="tab:blue", alpha=0.5)
    means = [float(np.mean([f1 for l, _, f1 in rows if l == depth])) for depth in depths]
    ax.plot(depths, means, "-", color="tab:blue", label="mean val F1")
    ax.set_xscale("log", base=2)
    ax.set_xticks(depths, [str(depth) for depth in depths])
    ax.set_xlabel("encoder layers")
    ax.set_ylabel("validation F1")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
