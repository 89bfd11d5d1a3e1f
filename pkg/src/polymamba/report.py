"""Matplotlib figure rendering for the CLI report paths.

Figures are written next to the delimited output on request; the Agg
backend keeps everything headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_loss_curve(trace, path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(range(len(trace)), trace, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("SPSA loss trace")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_roc_curve(fpr, tpr, auc_value, path) -> None:
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    ax.plot(fpr, tpr, lw=1.4, label=f"AUC = {auc_value:.4f}")
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_shape_bars(shapes, reports, path) -> None:
    """Grouped bars of F1 and IoU per polygon shape."""
    f1 = [r.f1 if r.f1 is not None else 0.0 for r in reports]
    iou = [r.iou if r.iou is not None else 0.0 for r in reports]
    x = range(len(shapes))
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    ax.bar([i - 0.2 for i in x], f1, width=0.4, label="F1")
    ax.bar([i + 0.2 for i in x], iou, width=0.4, label="IoU")
    ax.set_xticks(list(x))
    ax.set_xticklabels(shapes, rotation=20)
    ax.set_ylabel("score")
    ax.set_title("scan shape ablation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
