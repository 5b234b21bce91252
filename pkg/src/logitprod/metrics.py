"""Evaluation metrics (AUC, accuracy, macro F1, Harrell C-index, dense rank
tables) and the efficiency scoring used to compare fusion strategies by
performance per unit of normalized cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CostProfile:
    flops_g: float  # GFLOPs
    params_m: float  # millions of trainable parameters
    time_h: float  # training hours

    def __post_init__(self):
        if min(self.flops_g, self.params_m, self.time_h) <= 0:
            raise ValueError("cost components must be positive")


@dataclass(frozen=True)
class PerfSummary:
    auc: float
    acc: float
    f1: float

    @property
    def perf(self) -> float:
        return (self.auc + self.acc + self.f1) / 3.0


def auc(scores, labels) -> float:
    """Binary AUC via the Mann-Whitney statistic; ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("undefined AUC: both classes must be present")
    # average ranks (1-based) with tie groups sharing the mean rank
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_auc(prob_matrix, labels) -> float:
    """Macro one-vs-rest AUC using each class's probability as its score.

    Classes missing positives or negatives are skipped; errors if none remain.
    """
    p = np.asarray(prob_matrix, dtype=np.float64)
    labels = np.asarray(labels)
    per_class = []
    for c in range(p.shape[1]):
        mask = (labels == c).astype(int)
        if 0 < mask.sum() < len(mask):
            per_class.append(auc(p[:, c], mask))
    if not per_class:
        raise ValueError("undefined AUC: no class has both outcomes")
    return float(np.mean(per_class))


def f1(preds, labels) -> float:
    """Macro-averaged F1; classes absent from both preds and labels are
    excluded from the average."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    classes = np.union1d(np.unique(preds), np.unique(labels))
    scores = []
    for c in classes:
        tp = int(((preds == c) & (labels == c)).sum())
        fp = int(((preds == c) & (labels != c)).sum())
        fn = int(((preds != c) & (labels == c)).sum())
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    return float((preds == labels).mean())


def c_index(risks, labels) -> float:
    """Harrell's concordance over comparable pairs (t_i < t_j, delta_i = 1);
    risk ties score 1/2."""
    risks = np.asarray(risks, dtype=np.float64)
    t = np.asarray([lab[0] for lab in labels], dtype=np.float64)
    delta = np.asarray([lab[1] for lab in labels], dtype=np.int64)
    comparable = (t[:, None] < t[None, :]) & (delta[:, None] == 1)
    n_comp = int(comparable.sum())
    if n_comp == 0:
        raise ValueError("no comparable pairs")
    greater = risks[:, None] > risks[None, :]
    ties = risks[:, None] == risks[None, :]
    concordant = (comparable & greater).sum() + 0.5 * (comparable & ties).sum()
    return float(concordant / n_comp)


def eff_score(
    candidate: tuple[CostProfile, float], reference: tuple[CostProfile, float]
) -> tuple[float, float]:
    """(Cost, EffScore) of a candidate against a reference.

    Cost is the geometric mean of the three normalized cost ratios; EffScore
    is the performance ratio divided by Cost. The reference scores exactly 1.
    """
    prof, perf = candidate
    prof0, perf0 = reference
    cost = (
        (prof.flops_g / prof0.flops_g)
        * (prof.params_m / prof0.params_m)
        * (prof.time_h / prof0.time_h)
    ) ** (1.0 / 3.0)
    return cost, (perf / perf0) / cost


def rank_table(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense per-task ranks (1 = best, ties share the better rank) and the
    mean rank across tasks. scores is (methods, tasks), higher is better."""
    scores = np.asarray(scores, dtype=np.float64)
    ranks = np.empty_like(scores)
    for j in range(scores.shape[1]):
        col = scores[:, j]
        uniq = np.unique(col)[::-1]  # descending
        lookup = {v: r + 1 for r, v in enumerate(uniq)}
        ranks[:, j] = [lookup[v] for v in col]
    return ranks, ranks.mean(axis=1)
