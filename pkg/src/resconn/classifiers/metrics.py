"""Binary classification metrics with the patient class as positive."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import IndeterminateError

METRIC_NAMES = ("auc", "accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class Metrics:
    auc: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def roc_auc(y_true, scores) -> float:
    """Mann-Whitney AUC; tied scores get half credit."""
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise IndeterminateError("AUC is undefined when y_true holds a single class")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def compute_metrics(y_true, scores, threshold: float = 0.5, allow_single_class: bool = False) -> Metrics:
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("y_true and scores differ in length")
    try:
        auc = roc_auc(y, s)
    except IndeterminateError:
        if not allow_single_class:
            raise
        auc = float("nan")
    pred = (s >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / len(y)
    return Metrics(auc, accuracy, precision, recall, f1, tp, fp, tn, fn)


def balanced_class_weights(y) -> dict[int, float]:
    """w_c = n_total / (2 n_c)."""
    y = np.asarray(y).astype(int)
    n = len(y)
    counts = {c: int(np.sum(y == c)) for c in (0, 1)}
    if min(counts.values()) == 0:
        raise ValueError("class weights need both classes present")
    return {c: n / (2 * k) for c, k in counts.items()}
