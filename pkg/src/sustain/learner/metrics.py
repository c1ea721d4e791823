"""Ranking and threshold metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from sustain.errors import DimensionMismatch, SingleClass


def _check(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DimensionMismatch(f"{s.shape[0]} scores but {y.shape[0]} labels")
    return s, y.astype(int)


def auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative; ties count half.

    Computed from midranks: (R_pos - n_pos (n_pos + 1) / 2) / (n_pos n_neg).
    """
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float
    precision_defined: bool

    def __iter__(self):
        return iter((self.precision, self.recall))


def precision_recall_at(scores, labels, threshold: float = 0.5) -> PrecisionRecall:
    """Precision/recall with positive prediction iff score >= threshold.

    With no predicted positives precision is reported as 0 and flagged.
    """
    s, y = _check(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    defined = tp + fp > 0
    precision = tp / (tp + fp) if defined else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return PrecisionRecall(precision, recall, defined)
