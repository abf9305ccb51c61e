"""Figures written next to the delimited reports."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def figsize(scale: float = 1.0) -> tuple[float, float]:
    width = 6.0 * scale
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    return width, width * golden


def _save(fig, path) -> Path:
    path = Path(path)
    # no Software/date metadata so reruns give identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_loss_curve(curve: Sequence[tuple[int, float, float]], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        epochs = [c[0] for c in curve]
        ax.plot(epochs, [c[1] for c in curve], marker="o", ms=3, label="train")
        valid = [c[2] for c in curve]
        if not all(math.isnan(v) for v in valid):
            ax.plot(epochs, valid, marker="s", ms=3, label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean BCE per instance")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_model_comparison(reports, path) -> Path:
    """Side-by-side bars of BCE, AUC and (when present) mean uplift."""
    metrics = [("bce", "BCE"), ("auc", "AUC")]
    if any(r.mean_uplift is not None for r in reports):
        metrics.append(("mean_uplift", "mean uplift"))
    names = [r.model for r in reports]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(metrics), figsize=figsize(1.0))
        for ax, (attr, label) in zip(axes, metrics):
            values = [getattr(r, attr) or 0.0 for r in reports]
            ax.bar(range(len(names)), values, color=[f"C{k}" for k in range(len(names))])
            ax.set_xticks(range(len(names)))
            ax.set_xticklabels(names, rotation=30, ha="right")
            ax.set_title(label)
        fig.tight_layout()
        return _save(fig, path)


def plot_uplift_distribution(uplifts: Mapping[str, Sequence[float]], path, n_slate: int | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        hi = n_slate if n_slate is not None else max(max(v) for v in uplifts.values())
        bins = [hi * k / 30 for k in range(31)]
        for name, values in uplifts.items():
            ax.hist(values, bins=bins, histtype="step", label=name)
        ax.set_xlabel("slate uplift")
        ax.set_ylabel("users")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_topic_histogram(histogram: Sequence[tuple[int, int]], path, top: int = 20) -> Path:
    rows = list(histogram)[:top]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        ax.bar(range(len(rows)), [c for _, c in rows])
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels([str(t) for t, _ in rows])
        ax.set_xlabel("topic")
        ax.set_ylabel("documents")
        fig.tight_layout()
        return _save(fig, path)


def plot_ratio_distribution(ratios: Mapping[int, Sequence[float]], path) -> Path:
    """Greedy/exhaustive uplift ratios, one box per slate size."""
    keys = sorted(ratios)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        ax.boxplot([list(ratios[k]) for k in keys])
        ax.set_xticks(range(1, len(keys) + 1))
        ax.set_xticklabels([f"n={k}" for k in keys])
        ax.set_ylabel("greedy / exhaustive uplift")
        fig.tight_layout()
        return _save(fig, path)


def plot_sweep(rows: Sequence[tuple[str, float]], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        ax.plot(range(len(rows)), [v for _, v in rows], marker="o")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels([k for k, _ in rows], rotation=30, ha="right")
        ax.set_ylabel("validation BCE")
        fig.tight_layout()
        return _save(fig, path)
