"""Matplotlib report figures rendered alongside the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_training_curves(traces, path: str | Path):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i, trace in enumerate(traces):
        ax.plot(trace.epochs, trace.train_loss, alpha=0.6, label=f"fold {i} train")
        ax.plot(trace.epochs, trace.val_loss, alpha=0.9, ls="--", label=f"fold {i} val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("Gate training curves")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_fold_metrics_figure(per_fold: list[dict], path: str | Path):
    keys = sorted(per_fold[0]["metrics"].keys())
    folds = [f["fold"] for f in per_fold]
    x = np.arange(len(folds))
    width = 0.8 / len(keys)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i, key in enumerate(keys):
        vals = [f["metrics"][key] for f in per_fold]
        ax.bar(x + i * width, vals, width=width, label=key)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([f"fold {f}" for f in folds])
    ax.set_title("Per-fold test metrics")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_effscore_figure(rows: list[dict], path: str | Path):
    """rows: dicts with method, cost, eff_score."""
    methods = [r["method"] for r in rows]
    effs = [r["eff_score"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.barh(methods, effs, color="steelblue")
    ax.set_xlabel("EffScore (performance ratio / normalized cost)")
    ax.set_title("Fusion-strategy efficiency")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_reliability_figure(confidences, correct, path: str | Path, n_bins: int = 10):
    """Reliability diagram: binned mean confidence vs empirical accuracy."""
    confidences = np.asarray(confidences)
    correct = np.asarray(correct, dtype=float)
    edges = np.linspace(0, 1, n_bins + 1)
    centers, accs = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (confidences >= lo) & (confidences < hi)
        if mask.sum():
            centers.append(confidences[mask].mean())
            accs.append(correct[mask].mean())
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], "k--", lw=1)
    ax.plot(centers, accs, "o-", color="firebrick")
    ax.set_xlabel("confidence")
    ax.set_ylabel("empirical accuracy")
    ax.set_title("Reliability")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
