"""Figure rendering for the report path. Written next to the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .features import SCALAR_CONDITIONS

_LABEL_NAMES = {1: "human", 0: "AI"}
_LABEL_COLORS = {1: "tab:blue", 0: "tab:orange"}


def score_distribution_figure(samples, path) -> None:
    """Violin + box summary of discrimination scores per style and label."""
    samples = list(samples)
    styles = sorted({s.style for s in samples})
    fig, axes = plt.subplots(
        1, len(styles), figsize=(3.2 * len(styles), 3.4), squeeze=False, sharey=True
    )
    for ax, style in zip(axes[0], styles):
        groups, names = [], []
        for label in (1, 0):
            values = [s.score for s in samples if s.style == style and s.label == label]
            if values:
                groups.append(values)
                names.append(_LABEL_NAMES[label])
        if groups:
            parts = ax.violinplot(groups, showmedians=False, showextrema=False)
            for body, name in zip(parts["bodies"], names):
                body.set_facecolor(_LABEL_COLORS[1 if name == "human" else 0])
                body.set_alpha(0.55)
            ax.boxplot(groups, widths=0.12, showfliers=False)
            ax.set_xticks(range(1, len(names) + 1), names)
        ax.set_title(style)
        ax.grid(alpha=0.25)
    axes[0][0].set_ylabel("discrimination score")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def condition_score_figure(samples, path) -> None:
    """Scatter of score against each scalar condition, colored by label."""
    samples = list(samples)
    fig, axes = plt.subplots(2, 3, figsize=(10.5, 6.2))
    for ax, name in zip(axes.ravel(), SCALAR_CONDITIONS):
        for label in (1, 0):
            xs = [getattr(s.conditions, name) for s in samples if s.label == label]
            ys = [s.score for s in samples if s.label == label]
            ax.scatter(
                xs, ys, s=6, alpha=0.35, color=_LABEL_COLORS[label],
                label=_LABEL_NAMES[label],
            )
        ax.set_xlabel(name)
        ax.grid(alpha=0.25)
    axes[0][0].set_ylabel("score")
    axes[1][0].set_ylabel("score")
    handles, labels = axes[0][0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def accuracy_bars_figure(reports, path) -> None:
    """Accuracy per harness grid point."""
    names = [r.name for r in reports]
    accs = [r.accuracy for r in reports]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(names)), 3.4))
    ax.bar(range(len(names)), accs, color="tab:blue")
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(axis="y", alpha=0.25)
    for i, acc in enumerate(accs):
        ax.text(i, acc + 0.01, f"{acc:.3f}", ha="center", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
