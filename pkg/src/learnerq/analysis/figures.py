"""Static figures: per-subject level distribution, engagement by level, confusion heatmap."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .engagement import DistributionRow, EngagementRow  # noqa: E402

# Fixed metadata so repeated runs write identical files.
_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_distribution(rows: Sequence[DistributionRow], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if rows:
        levels = list(rows[0].proportions)
        width = 0.8 / len(levels)
        x = np.arange(len(rows))
        for j, level in enumerate(levels):
            ax.bar(x + j * width, [100 * r.proportions[level] for r in rows], width, label=level.value)
        ax.set_xticks(x + width * (len(levels) - 1) / 2, [r.subject.value.replace("_", " ") for r in rows])
        ax.legend(fontsize=8, ncol=2)
    ax.set_ylabel("share of questions (%)")
    ax.set_title("Question level by subject")
    return _save(fig, Path(path))


def plot_engagement(rows: Sequence[EngagementRow], path: str | Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    names = [r.bt_class.value for r in rows]
    for ax, attr, title in zip(axes, ("mean_like_rate", "mean_reply_rate"), ("likes / views", "replies / views")):
        ax.bar(names, [getattr(r, attr) for r in rows], color="tab:blue")
        ax.set_title(f"mean {title}")
        ax.tick_params(axis="x", rotation=45)
    return _save(fig, Path(path))


def plot_confusion(classes: Sequence[str], confusion, path: str | Path) -> Path:
    """Heatmap with gold classes on rows and predictions on columns."""
    cm = np.asarray(confusion)
    classes = list(classes)
    fig, ax = plt.subplots(figsize=(1 + 0.7 * len(classes), 1 + 0.6 * len(classes)))
    ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(len(classes)), classes, rotation=45, ha="right")
    ax.set_yticks(range(len(classes)), classes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    threshold = cm.max() / 2 if cm.size else 0
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, int(cm[i, j]), ha="center", va="center", color="white" if cm[i, j] > threshold else "black")
    return _save(fig, Path(path))
