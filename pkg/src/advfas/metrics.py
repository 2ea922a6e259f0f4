"""Ranking and threshold metrics for binary decisions.

Scores are oriented so larger means more real; positives are label 1.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

__all__ = [
    "auc_score",
    "accuracy",
    "balanced_accuracy",
    "threshold_candidates",
    "select_threshold_scores",
]


def _check_pair(labels, scores) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise DomainError("labels and scores must be matching 1-D arrays")
    if np.any((labels != 0) & (labels != 1)):
        raise DomainError("labels must be 0 or 1")
    if not np.all(np.isfinite(scores)):
        raise DomainError("scores must be finite")
    return labels, scores


def auc_score(labels, scores) -> float:
    """Area under the ROC curve by the rank statistic.

    Equals the Mann-Whitney probability that a random positive outscores a
    random negative, with ties counting one half. Average ranks implement the
    tie rule exactly.
    """
    labels, scores = _check_pair(labels, scores)
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DomainError("auc needs both classes present")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(labels.size, dtype=np.float64)
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # average rank over the tie block, 1-based
        ranks[order[i : j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    pos_rank_sum = float(np.sum(ranks[labels == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy(labels, decisions) -> float:
    labels = np.asarray(labels)
    decisions = np.asarray(decisions)
    if labels.shape != decisions.shape or labels.size == 0:
        raise DomainError("labels and decisions must be matching non-empty arrays")
    return float(np.mean(labels == decisions))


def balanced_accuracy(labels, decisions) -> float:
    """Mean of the per-class accuracies; both classes must be present."""
    labels = np.asarray(labels)
    decisions = np.asarray(decisions)
    if labels.shape != decisions.shape:
        raise DomainError("labels and decisions must have matching shapes")
    pos = labels == 1
    neg = labels == 0
    if not pos.any() or not neg.any():
        raise DomainError("balanced accuracy needs both classes present")
    tpr = float(np.mean(decisions[pos] == 1))
    tnr = float(np.mean(decisions[neg] == 0))
    return (tpr + tnr) / 2.0


def threshold_candidates(scores) -> np.ndarray:
    """Midpoints of adjacent sorted scores, plus the endpoints 0 and 1.

    Tied neighbors contribute the tied value itself as a candidate; the
    returned array is deduplicated and ascending.
    """
    scores = np.asarray(scores, dtype=np.float64)
    s = np.sort(scores)
    mids = (s[:-1] + s[1:]) / 2.0 if s.size > 1 else np.empty(0)
    return np.unique(np.concatenate([[0.0], mids, [1.0]]))


def select_threshold_scores(labels, scores) -> tuple[float, float]:
    """The candidate threshold maximizing balanced accuracy on (labels, scores).

    Decision rule: score >= threshold means real. Ties in balanced accuracy
    break toward the smaller threshold. Returns (threshold, balanced_acc).
    """
    labels, scores = _check_pair(labels, scores)
    if not (labels == 1).any() or not (labels == 0).any():
        raise DomainError("threshold selection needs both classes present")
    pos_sorted = np.sort(scores[labels == 1])
    neg_sorted = np.sort(scores[labels == 0])
    n_pos, n_neg = pos_sorted.size, neg_sorted.size
    best_t = None
    best_v = -1.0
    for t in threshold_candidates(scores):
        tpr = (n_pos - np.searchsorted(pos_sorted, t, side="left")) / n_pos
        tnr = np.searchsorted(neg_sorted, t, side="left") / n_neg
        v = (tpr + tnr) / 2.0
        if v > best_v:
            best_v = v
            best_t = t
    return float(best_t), float(best_v)
