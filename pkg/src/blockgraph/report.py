"""Figure rendering for run outputs: heatmaps, replicate boxplots, curve overlays.

Everything draws straight to image files with the Agg backend so runs work on
headless machines; the CSV/JSON outputs remain the canonical record and the
figures are companions to them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "inclusion_heatmap",
    "metric_boxplots",
    "curve_overlay",
]

_METRIC_ORDER = ("f1", "std_shd", "sensitivity", "specificity")


def inclusion_heatmap(path, inclusion: np.ndarray, title: str = "Edge inclusion probability") -> Path:
    """Render a posterior edge-inclusion matrix as a heatmap."""
    inclusion = np.asarray(inclusion, dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 4.6))
    im = ax.imshow(inclusion, vmin=0.0, vmax=1.0, cmap="viridis", origin="upper")
    ax.set_xlabel("node")
    ax.set_ylabel("node")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def metric_boxplots(path, rows: list[dict], title: str = "Replicate metrics") -> Path:
    """Render per-replicate metric distributions as one boxplot panel per metric."""
    if not rows:
        raise ValueError("no replicate rows to plot")
    fig, axes = plt.subplots(1, len(_METRIC_ORDER), figsize=(3.0 * len(_METRIC_ORDER), 3.6))
    for ax, metric in zip(np.atleast_1d(axes), _METRIC_ORDER):
        values = [float(r[metric]) for r in rows]
        ax.boxplot(values, widths=0.5)
        ax.scatter(np.ones(len(values)), values, s=12, alpha=0.6, color="tab:blue")
        ax.set_title(metric)
        ax.set_xticks([])
        ax.grid(True, axis="y", alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def curve_overlay(
    path,
    grid: np.ndarray,
    observed: np.ndarray,
    fitted: np.ndarray,
    max_curves: int = 12,
    title: str = "Observed and fitted curves",
) -> Path:
    """Overlay observed curves (thin) with their posterior-mean fits (bold)."""
    grid = np.asarray(grid, dtype=float)
    observed = np.atleast_2d(np.asarray(observed, dtype=float))
    fitted = np.atleast_2d(np.asarray(fitted, dtype=float))
    show = min(max_curves, observed.shape[0])
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    colors = plt.cm.tab20(np.linspace(0, 1, max(show, 2)))
    for t in range(show):
        ax.plot(grid, observed[t], color=colors[t], alpha=0.35, lw=0.8)
        ax.plot(grid, fitted[t], color=colors[t], lw=1.8)
    ax.set_xlabel("grid")
    ax.set_ylabel("value")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
