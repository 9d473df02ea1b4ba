"""Figure rendering for the report path. Every figure is built from the same
data that goes into the delimited tables and saved as a PNG next to them."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .calib import PredictionSet, ReliabilityBins, class_profiles


def reliability_figure(bins: ReliabilityBins, path: str | Path) -> Path:
    """Reliability diagram: per-bin accuracy bars against the diagonal."""
    centers = (np.arange(bins.m) + 0.5) / bins.m
    width = 1.0 / bins.m
    fig, ax = plt.subplots(figsize=(5, 4.5))
    filled = bins.counts > 0
    ax.bar(
        centers[filled],
        bins.accuracy[filled],
        width=width * 0.92,
        color="#4878cf",
        edgecolor="black",
        linewidth=0.5,
        label="accuracy",
    )
    gap_top = np.where(filled, bins.mean_confidence, 0.0)
    ax.bar(
        centers[filled],
        (gap_top - bins.accuracy)[filled],
        bottom=bins.accuracy[filled],
        width=width * 0.92,
        color="#d65f5f",
        alpha=0.45,
        edgecolor="none",
        label="gap to confidence",
    )
    ax.plot([0, 1], [0, 1], "k--", linewidth=1)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("confidence")
    ax.set_ylabel("accuracy")
    ax.set_title("reliability diagram")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def class_profiles_figure(preds: PredictionSet, path: str | Path) -> Path:
    """Scatter of per-class F1 against mean true-class confidence."""
    f1, mean_conf = class_profiles(preds)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.scatter(mean_conf, f1, s=30, color="#4878cf", edgecolor="black", linewidth=0.4)
    for c, (x, y) in enumerate(zip(mean_conf, f1)):
        if not np.isnan(x):
            ax.annotate(str(c), (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("mean confidence on true-class samples")
    ax.set_ylabel("F1 score")
    ax.set_title("per-class F1 vs confidence")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def loss_curves_figure(
    class_train_loss: list[list[float]],
    class_val_loss: list[list[float]],
    path: str | Path,
    highlight: int = 5,
) -> Path:
    """Per-class loss curves with the highest- and lowest-loss classes
    (by final train loss) highlighted."""
    train = np.asarray(class_train_loss)
    val = np.asarray(class_val_loss)
    epochs = np.arange(train.shape[0])
    order = np.argsort(train[-1])
    n_hi = min(highlight, len(order))
    low, high = order[:n_hi], order[-n_hi:]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    for ax, series, title in ((ax1, train, "train"), (ax2, val, "validation")):
        for c in low:
            ax.plot(epochs, series[:, c], color="#4878cf", alpha=0.8, linewidth=1)
        for c in high:
            ax.plot(epochs, series[:, c], color="#d65f5f", alpha=0.8, linewidth=1)
        ax.set_xlabel("epoch")
        ax.set_title(f"per-class {title} loss")
        ax.set_yscale("log")
    ax1.set_ylabel("loss")
    fig.suptitle(f"lowest {n_hi} (blue) vs highest {n_hi} (red) classes by final train loss", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def top_k_figure(profile: list[tuple[int, float]], class_index: int, path: str | Path) -> Path:
    """Bar chart of the top-k mean class probabilities for one true class."""
    names = [str(c) for c, _ in profile]
    values = [p for _, p in profile]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.bar(range(len(values)), values, color="#4878cf", edgecolor="black", linewidth=0.5)
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(names)
    ax.set_xlabel("class")
    ax.set_ylabel("mean probability")
    ax.set_title(f"top-{len(values)} classes for true class {class_index}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
