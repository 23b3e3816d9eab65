"""Figure rendering for the command-line reports.

Every report the CLI writes as delimited text gets a rendered figure next
to it: loss curves for training logs, bar charts for metric tables, and a
histogram for detector scores.
"""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import LoadError
from .trainer import LOG_COLUMNS


def parse_training_log(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Read a step log into arrays: step, plus one NaN-padded array per loss."""
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise LoadError(f"training log not found: {path}") from None
    steps: list[int] = []
    series: dict[str, list[float]] = {name: [] for name in LOG_COLUMNS}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != 2 + len(LOG_COLUMNS):
            raise LoadError(f"{path}:{lineno}: malformed log line")
        steps.append(int(cells[0]))
        for name, cell in zip(LOG_COLUMNS, cells[2:]):
            series[name].append(float("nan") if cell == "-" else float(cell))
    out = {name: np.array(values) for name, values in series.items()}
    out["step"] = np.array(steps)
    return out


def render_loss_curves(log_path: str | os.PathLike, out_path: str | os.PathLike) -> None:
    """Plot every loss column of a training log against the step index."""
    data = parse_training_log(log_path)
    fig, ax = plt.subplots(figsize=(9, 5))
    for name in LOG_COLUMNS:
        values = data[name]
        if np.all(np.isnan(values)):
            continue
        ax.plot(data["step"], values, label=name, linewidth=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(ncol=4, fontsize=8)
    ax.set_title("training losses")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_metric_bars(
    metrics: dict[str, float], out_path: str | os.PathLike, title: str = "metrics"
) -> None:
    """Bar chart of named scalar metrics."""
    names = list(metrics)
    values = [metrics[name] for name in names]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(names)), 4))
    ax.bar(range(len(names)), values, color="steelblue")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    for i, value in enumerate(values):
        ax.text(i, value, f"{value:.3f}", ha="center", va="bottom", fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_score_histogram(
    scores: list[float], labels: list[str], out_path: str | os.PathLike
) -> None:
    """Histogram of detector scores, split by assigned label, cut at zero."""
    scores_arr = np.array(scores, dtype=np.float64)
    labels_arr = np.array(labels)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, color in (("genuine", "seagreen"), ("adversarial", "indianred")):
        member = scores_arr[labels_arr == name]
        if member.size:
            ax.hist(member, bins=20, alpha=0.6, color=color, label=name)
    ax.axvline(0.0, color="black", linewidth=1, linestyle="--")
    ax.set_xlabel("detector score")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
