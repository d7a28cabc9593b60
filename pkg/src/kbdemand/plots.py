"""Matplotlib figures rendered next to the delimited reports.

Headless (Agg) rendering only; every function writes a PNG and returns its
path. Figures are companions to the TSV files, never a replacement.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

MODEL_COLORS = {"freq": "#4878cf", "regr": "#d65f5f", "nn": "#6acc65"}


def _color(kind: str) -> str:
    return MODEL_COLORS.get(kind, "#8172b2")


def save_metric_bars(results: Mapping, path) -> Path:
    """Grouped bars of jaccard / false-neg / false-pos / intersection per model."""
    path = Path(path)
    metrics = ("jaccard", "false_neg", "false_pos", "intersection")
    kinds = list(results)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
    for ax, weighted in zip(axes, (False, True)):
        width = 0.8 / max(len(kinds), 1)
        for i, kind in enumerate(kinds):
            report = results[kind].weighted if weighted else results[kind].unweighted
            values = [getattr(report, metric) for metric in metrics]
            offsets = [j + i * width for j in range(len(metrics))]
            ax.bar(offsets, values, width=width, label=kind, color=_color(kind))
        ax.set_xticks([j + width * (len(kinds) - 1) / 2 for j in range(len(metrics))])
        ax.set_xticklabels(metrics, rotation=20)
        ax.set_ylim(0, 1)
        ax.set_title("usage-weighted" if weighted else "unweighted")
        ax.grid(axis="y", alpha=0.3)
    axes[0].set_ylabel("score")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_fold_plot(results: Mapping, path) -> Path:
    """Per-fold Jaccard trajectories for each model."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.5, 3.6))
    for kind, res in results.items():
        scores = [r.jaccard for r in res.per_fold_unweighted]
        ax.plot(range(len(scores)), scores, marker="o", label=kind, color=_color(kind))
    ax.set_xlabel("fold")
    ax.set_ylabel("weighted Jaccard")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_temporal_plot(results: Sequence, path) -> Path:
    """Jaccard against period index for a temporal evaluation."""
    path = Path(path)
    labels = [r.label for r in results]
    fig, ax = plt.subplots(figsize=(6.5, 3.6))
    ax.plot(labels, [r.unweighted.jaccard for r in results], marker="o", label="unweighted")
    ax.plot(labels, [r.weighted.jaccard for r in results], marker="s", label="usage-weighted")
    ax.set_xlabel("period")
    ax.set_ylabel("weighted Jaccard")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_completeness_hist(scores: Sequence[float], subset_score: float, path) -> Path:
    """Histogram of per-entity completeness with the subset score marked."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.5, 3.6))
    ax.hist(list(scores), bins=20, range=(0, 1), color="#4878cf", alpha=0.85)
    ax.axvline(subset_score, color="#d65f5f", linestyle="--",
               label=f"subset score {subset_score:.3f}")
    ax.set_xlabel("entity completeness")
    ax.set_ylabel("entities")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_gap_bars(gaps: Sequence, path, max_bars: int = 20) -> Path:
    """Horizontal bars of missing demand mass for the top gap relations."""
    path = Path(path)
    shown = list(gaps)[:max_bars]
    fig, ax = plt.subplots(figsize=(6.5, max(2.5, 0.3 * len(shown) + 1.2)))
    if shown:
        names = [g.relation for g in shown][::-1]
        masses = [g.missing_mass for g in shown][::-1]
        ax.barh(names, masses, color="#d65f5f", alpha=0.85)
    ax.set_xlabel("usage-weighted missing demand mass")
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
