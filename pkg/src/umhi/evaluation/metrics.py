"""Precision, recall and rank-based AUC."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


class SingleClassError(ValueError):
    pass


@dataclass
class MetricsReport:
    precision: float
    recall: float
    auc: float
    n_pos: int
    n_neg: int
    threshold: float = 0.5

    def as_dict(self) -> dict:
        return asdict(self)


def auc_score(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def compute_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    pred = scores >= threshold
    tp = int(np.count_nonzero(pred & (labels == 1)))
    fp = int(np.count_nonzero(pred & (labels == 0)))
    fn = int(np.count_nonzero(~pred & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return MetricsReport(precision, recall, auc_score(scores, labels),
                         int(np.count_nonzero(labels == 1)), int(np.count_nonzero(labels == 0)), threshold)


def mean_report(reports: list[MetricsReport]) -> dict:
    """Mean and sample std of each metric across folds."""
    out = {}
    for name in ("precision", "recall", "auc"):
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        out[name] = float(vals.sum() / len(vals))
        out[name + "_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return out
