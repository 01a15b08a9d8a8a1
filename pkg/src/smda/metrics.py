"""Binary classification metrics: accuracy, per-class P/R/F1, macro-F1."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import SMDAError


class MetricsError(SMDAError):
    pass


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    macro_f1: float
    precision: tuple[float, float]
    recall: tuple[float, float]
    f1: tuple[float, float]
    tp: int
    fp: int
    fn: int
    tn: int

    def as_dict(self) -> dict:
        return asdict(self)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    denom = 2 * tp + fp + fn
    return precision, recall, (2 * tp / denom if denom else 0.0)


def from_counts(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    """Metrics from confusion counts with class 1 as the positive class.

    Class 0's F1 swaps roles (TN acts as its TP). F1 is 0 when a class has
    no predictions and no gold instances.
    """
    total = tp + fp + fn + tn
    if total == 0:
        raise MetricsError("cannot compute metrics on an empty example set")
    p1, r1, f1_1 = _prf(tp, fp, fn)
    p0, r0, f1_0 = _prf(tn, fn, fp)
    return Metrics(
        accuracy=(tp + tn) / total,
        macro_f1=(f1_0 + f1_1) / 2,
        precision=(p0, p1),
        recall=(r0, r1),
        f1=(f1_0, f1_1),
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )


def compute_metrics(gold: Sequence[int], pred: Sequence[int]) -> Metrics:
    gold, pred = np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise MetricsError(f"gold and predictions differ in length: {gold.shape} vs {pred.shape}")
    tp = int(np.sum((gold == 1) & (pred == 1)))
    fp = int(np.sum((gold == 0) & (pred == 1)))
    fn = int(np.sum((gold == 1) & (pred == 0)))
    tn = int(np.sum((gold == 0) & (pred == 0)))
    return from_counts(tp, fp, fn, tn)


def argmax_labels(probs: np.ndarray) -> np.ndarray:
    """Class index per row; exact ties go to class 0."""
    return (probs[:, 1] > probs[:, 0]).astype(np.int64)
