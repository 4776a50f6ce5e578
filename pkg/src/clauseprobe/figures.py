"""Matplotlib renderings of the report data, written next to the text output.

Everything draws on the Agg backend into a file and returns the path, so the
CLI stays headless-safe.
"""

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import format_percent

DPI = 150


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def save_transfer_heatmap(matrix, path):
    """Accuracy grid; cells at/below baseline get an underline, failed 'x'."""
    n_rows, n_cols = len(matrix.sources), len(matrix.targets)
    grid = np.full((n_rows, n_cols), np.nan)
    for i, s in enumerate(matrix.sources):
        for j, t in enumerate(matrix.targets):
            cell = matrix.cells.get((s, t))
            if cell is not None:
                grid[i, j] = cell.accuracy * 100.0
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * n_cols, 1.2 + 0.8 * n_rows))
    image = ax.imshow(grid, cmap="viridis", vmin=0.0, vmax=100.0)
    for i, s in enumerate(matrix.sources):
        for j, t in enumerate(matrix.targets):
            cell = matrix.cells.get((s, t))
            if cell is None:
                ax.text(j, i, "x", ha="center", va="center", color="red")
                continue
            value = cell.accuracy * 100.0
            color = "white" if value < 55.0 else "black"
            ax.text(j, i, format_percent(cell.accuracy), ha="center",
                    va="center", color=color)
            if not cell.beats_baseline:
                ax.plot([j - 0.28, j + 0.28], [i + 0.22, i + 0.22],
                        color=color, linewidth=1.0)
    ax.set_xticks(range(n_cols), matrix.targets, rotation=45, ha="right")
    ax.set_yticks(range(n_rows), matrix.sources)
    ax.set_xlabel("evaluated on")
    ax.set_ylabel("trained on")
    fig.colorbar(image, ax=ax, label="accuracy (%)")
    return _finish(fig, path)


def save_history_curve(history, path, title="dev accuracy by epoch"):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    epochs = np.arange(1, len(history) + 1)
    ax.plot(epochs, [h * 100.0 for h in history], marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy (%)")
    ax.set_title(title)
    ax.set_xticks(epochs)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def save_head_direction_bars(stats_by_name, path):
    """Grouped bars: fraction of parent-to-the-right per relation/treebank."""
    names = list(stats_by_name)
    deprels = sorted({d for stats in stats_by_name.values() for d in stats})
    width = 0.8 / max(len(names), 1)
    fig, ax = plt.subplots(figsize=(1.5 + 0.9 * len(deprels), 3.4))
    base = np.arange(len(deprels))
    for k, name in enumerate(names):
        stats = stats_by_name[name]
        heights = []
        for d in deprels:
            stat = stats.get(d)
            frac = stat.fraction_parent_right if stat else None
            heights.append(0.0 if frac is None else frac * 100.0)
        ax.bar(base + k * width, heights, width=width, label=name)
    ax.set_xticks(base + 0.4 - width / 2, deprels)
    ax.set_ylabel("parent to the right (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize="small")
    return _finish(fig, path)


def save_attention_profile(profiles_by_name, path):
    """Per-layer marker attention mass, one line per treebank/model."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for name, per_layer in profiles_by_name.items():
        layers = np.arange(1, len(per_layer) + 1)
        ax.plot(layers, per_layer, marker="o", label=name)
        ax.set_xticks(layers)
    ax.set_xlabel("layer")
    ax.set_ylabel("attention mass on markers")
    ax.set_ylim(bottom=0.0)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    return _finish(fig, path)
