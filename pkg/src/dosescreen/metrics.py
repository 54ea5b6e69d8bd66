"""Classification metrics: tied-rank ROC-AUC, thresholded confusion
reports, F1-optimal threshold search, and threshold sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError

REPORT_SCHEMA_VERSION = 1

SWEEP_CSV_HEADER = (
    "threshold,tn,fp,fn,tp,precision,recall,f1,specificity,balanced_accuracy,auc"
)


def roc_auc(y, scores) -> float:
    """Mann-Whitney rank statistic with average ranks for ties.

    Equals the probability a random positive outranks a random negative,
    ties counted half; exact agreement with the O(n^2) pairwise count.
    """
    y = np.asarray(y)
    s = np.asarray(scores, dtype=np.float64)
    n = y.shape[0]
    n_pos = int((y == 1).sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc requires both classes to be present")
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    boundaries = np.nonzero(np.diff(s_sorted))[0]
    starts = np.concatenate(([0], boundaries + 1))
    ends = np.concatenate((boundaries, [n - 1]))
    group_rank = (starts + ends) / 2.0 + 1.0  # average of 1-based ranks
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts + 1)
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class EvalReport:
    threshold: float
    tn: int
    fp: int
    fn: int
    tp: int
    precision: float
    recall: float
    f1: float
    specificity: float
    balanced_accuracy: float
    roc_auc: float  # NaN when y has a single class

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "threshold": self.threshold,
            "confusion": {"tn": self.tn, "fp": self.fp, "fn": self.fn, "tp": self.tp},
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "specificity": self.specificity,
            "balanced_accuracy": self.balanced_accuracy,
            "roc_auc": None if math.isnan(self.roc_auc) else self.roc_auc,
        }

    def csv_row(self) -> str:
        return ",".join(
            repr(v) if isinstance(v, float) else str(v)
            for v in (
                self.threshold,
                self.tn,
                self.fp,
                self.fn,
                self.tp,
                self.precision,
                self.recall,
                self.f1,
                self.specificity,
                self.balanced_accuracy,
                self.roc_auc,
            )
        )


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_at(y, probs, threshold: float, auc: float | None = None) -> EvalReport:
    """Report at the rule: predict positive iff prob >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise UsageError("threshold must be in [0, 1]")
    y = np.asarray(y)
    probs = np.asarray(probs, dtype=np.float64)
    pred = probs >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    specificity = tn / (tn + fp) if tn + fp else 0.0
    if auc is None:
        both = (tp + fn > 0) and (tn + fp > 0)
        auc = roc_auc(y, probs) if both else math.nan
    return EvalReport(
        threshold=float(threshold),
        tn=tn,
        fp=fp,
        fn=fn,
        tp=tp,
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        specificity=specificity,
        balanced_accuracy=(recall + specificity) / 2.0,
        roc_auc=float(auc),
    )


def optimize_threshold(y, probs, metric: str = "f1") -> tuple[float, EvalReport]:
    """Exhaustive F1 scan over all distinct probabilities plus {0, 1}.

    Returns the smallest maximizing threshold and its report.
    """
    if metric != "f1":
        raise UsageError(f"unsupported threshold metric: {metric!r}")
    y = np.asarray(y)
    probs = np.asarray(probs, dtype=np.float64)
    n_pos = int((y == 1).sum())
    if n_pos == 0 or n_pos == y.shape[0]:
        raise DataError("threshold optimization requires both classes")
    candidates = np.unique(np.concatenate((probs, [0.0, 1.0])))
    # Sweep in descending probability order: at threshold t the flagged set
    # is every sample with prob >= t, so cumulative sums give tp directly.
    order = np.argsort(-probs, kind="mergesort")
    sorted_probs = probs[order]
    cum_tp = np.cumsum(y[order] == 1)
    best_t = None
    best_f1 = -1.0
    for t in candidates:  # ascending, so strict improvement keeps smallest
        flagged = int(np.searchsorted(-sorted_probs, -t, side="right"))
        tp = int(cum_tp[flagged - 1]) if flagged else 0
        fp = flagged - tp
        fn = n_pos - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = _f1(precision, recall)
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    return best_t, confusion_at(y, probs, best_t)


def threshold_sweep(y, probs, thresholds) -> list[EvalReport]:
    y = np.asarray(y)
    probs = np.asarray(probs, dtype=np.float64)
    pos = (y == 1).any()
    neg = (y == 0).any()
    auc = roc_auc(y, probs) if (pos and neg) else math.nan
    return [confusion_at(y, probs, float(t), auc=auc) for t in thresholds]


def sweep_to_csv(reports: list[EvalReport]) -> str:
    lines = [SWEEP_CSV_HEADER]
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"
