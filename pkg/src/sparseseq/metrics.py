"""Ranking and F1 metrics with the tie conventions pinned down.

AUROC counts concordant positive/negative pairs with half credit for ties.
AUPRC is average precision (step integral, tied scores grouped at one
threshold), not trapezoidal interpolation, which is known to flatter PR
curves. F1 values are reported in percentage points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class MetricUndefinedError(ValueError):
    pass


def _score_groups(scores: np.ndarray, labels: np.ndarray):
    """Descending unique scores with per-group positive/negative counts."""
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    boundaries = np.flatnonzero(np.diff(s)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [s.size]))
    pos = np.array([y[a:b].sum() for a, b in zip(starts, ends)], dtype=np.float64)
    neg = (ends - starts) - pos
    return pos, neg


def auroc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUROC needs both classes present")
    pos, neg = _score_groups(scores, labels)
    # walking down the ranking: negatives seen so far are outscored by the
    # positives in the current group; ties within the group count half
    credit = 0.0
    neg_above = 0.0
    for p, q in zip(pos, neg):
        credit += p * (n_neg - neg_above - q) + 0.5 * p * q
        neg_above += q
    return float(credit / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision over descending unique thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise MetricUndefinedError("AUPRC needs at least one positive")
    pos, neg = _score_groups(scores, labels)
    tp = np.cumsum(pos)
    fp = np.cumsum(neg)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * precision))


@dataclass
class F1Report:
    per_class: np.ndarray          # (K,) percentage points
    weighted: float                # support-weighted mean, percentage points
    weighted_minority: float       # support-weighted over non-majority classes
    majority_class: int
    zero_division_classes: list = field(default_factory=list)


def f1_scores(true_labels, predicted_labels, n_classes: int) -> F1Report:
    """One-vs-rest F1 per class plus support-weighted summaries.

    A class with no true and no predicted samples gets F1 = 0 and a warning.
    The majority class is the most frequent label on this evaluation set
    (lowest index on ties).
    """
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    if n_classes < 2:
        raise MetricUndefinedError("need at least two classes")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (true_labels, predicted_labels), 1)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    per_class = np.zeros(n_classes)
    zero_division = []
    for c in range(n_classes):
        tp = confusion[c, c]
        denom = support[c] + predicted[c]  # 2tp + fp + fn
        if denom == 0:
            zero_division.append(c)
            warnings.warn(f"class {c} absent from truth and predictions; F1 set to 0")
            continue
        per_class[c] = 100.0 * 2.0 * tp / denom
    majority = int(support.argmax())
    weighted = weighted_f1(per_class, support)
    weighted_minority = weighted_f1_minority(per_class, support, majority)
    return F1Report(
        per_class=per_class,
        weighted=weighted,
        weighted_minority=weighted_minority,
        majority_class=majority,
        zero_division_classes=zero_division,
    )


def weighted_f1(per_class, support) -> float:
    """Support-weighted mean of per-class F1."""
    support = np.asarray(support, dtype=np.float64)
    total = support.sum()
    return float((support / total) @ np.asarray(per_class)) if total else 0.0


def weighted_f1_minority(per_class, support, majority: int) -> float:
    """Support-weighted mean of per-class F1 over everything but the majority."""
    support = np.asarray(support, dtype=np.float64).copy()
    minority_total = support.sum() - support[majority]
    if minority_total <= 0:
        return 0.0
    support[majority] = 0.0
    return float((support / minority_total) @ np.asarray(per_class))


def mean_std(values) -> tuple[float, float]:
    """Mean and population std, the aggregation used for multi-run reports."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())
