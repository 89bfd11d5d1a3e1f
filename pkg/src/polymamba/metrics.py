"""Confusion-count segmentation metrics and ROC/AUC.

Each ratio is computed as a single integer division so results agree
exactly with rational arithmetic. Metrics with a zero denominator are
reported as None (explicitly undefined), never silently zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value for the given inputs."""


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricReport:
    """Values in [0, 1]; None marks an undefined metric."""

    se: float | None
    sp: float | None
    pr: float | None
    iou: float | None
    f1: float | None
    acc: float | None
    auc: float | None = None


def confusion(pred_prob: np.ndarray, target: np.ndarray, threshold: float, fov: np.ndarray | None = None) -> ConfusionCounts:
    """Tally TP/FP/TN/FN with prediction positive iff pred >= threshold.

    fov, when given, is a binary mask; pixels outside it are excluded.
    """
    pred_prob = np.asarray(pred_prob)
    target = np.asarray(target)
    if pred_prob.shape != target.shape:
        raise ValueError(f"shapes disagree: {pred_prob.shape} vs {target.shape}")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    pos = pred_prob >= threshold
    truth = target != 0
    if fov is not None:
        fov = np.asarray(fov)
        if fov.shape != target.shape:
            raise ValueError(f"fov shape {fov.shape} does not match {target.shape}")
        keep = fov != 0
        pos, truth = pos[keep], truth[keep]
    tp = int(np.count_nonzero(pos & truth))
    fp = int(np.count_nonzero(pos & ~truth))
    fn = int(np.count_nonzero(~pos & truth))
    tn = int(np.count_nonzero(~pos & ~truth))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def basic_metrics(c: ConfusionCounts) -> MetricReport:
    """SE, SP, PR, IoU, F1, ACC from exact counts (auc left unset).

    F1 uses the reduced form 2*TP / (2*TP + FP + FN), algebraically equal to
    2*PR*SE/(PR+SE) wherever that is defined, and undefined when TP = 0
    (either factor undefined or a 0/0).
    """
    if c.total <= 0:
        raise ValueError("confusion counts are empty")
    return MetricReport(
        se=_ratio(c.tp, c.tp + c.fn),
        sp=_ratio(c.tn, c.tn + c.fp),
        pr=_ratio(c.tp, c.tp + c.fp),
        iou=_ratio(c.tp, c.tp + c.fp + c.fn),
        f1=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn) if c.tp > 0 else None,
        acc=_ratio(c.tp + c.tn, c.total),
    )


def roc_points(scores: np.ndarray, labels: np.ndarray):
    """ROC curve points (fpr, tpr) over all distinct thresholds, (0,0) first."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = (np.asarray(labels).ravel() != 0).astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError(f"shapes disagree: {scores.shape} vs {labels.shape}")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    tps = np.cumsum(l)
    fps = np.cumsum(1 - l)
    # keep only the last index of each tied-score block
    distinct = np.append(s[1:] != s[:-1], True)
    tpr = np.concatenate([[0.0], tps[distinct] / n_pos])
    fpr = np.concatenate([[0.0], fps[distinct] / n_neg])
    return fpr, tpr


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Trapezoidal area under the ROC curve (ties count one half)."""
    fpr, tpr = roc_points(scores, labels)
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) * 0.5))


CSV_COLUMNS = ("IOU", "AUC", "F1", "ACC", "SE", "SP")


def csv_header() -> str:
    return ",".join(CSV_COLUMNS)


def _cell(v: float | None) -> str:
    return "undef" if v is None else repr(v)


def csv_row(report: MetricReport) -> str:
    return ",".join(_cell(v) for v in (report.iou, report.auc, report.f1, report.acc, report.se, report.sp))
