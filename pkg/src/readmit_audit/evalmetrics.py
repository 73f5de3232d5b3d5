"""Confusion matrix and positive-class classification scores.

Undefined ratios (zero denominators) are reported as ``None`` rather than 0,
because a silent zero would propagate into the disparity ratios downstream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, LengthMismatch


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def predicted_positive(self) -> int:
        return self.tp + self.fp

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    def swapped(self) -> "ConfusionMatrix":
        """The same matrix read with the negative class as positive."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(int(d["tp"]), int(d["fp"]), int(d["fn"]), int(d["tn"]))


def _as_binary(values, name):
    arr = np.asarray(values)
    if arr.dtype == bool:
        return arr
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr.astype(bool)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t = _as_binary(y_true, "y_true")
    p = _as_binary(y_pred, "y_pred")
    if t.shape != p.shape:
        raise LengthMismatch(f"y_true has {t.size} entries, y_pred has {p.size}")
    if t.size == 0:
        raise EmptyInput("confusion matrix of zero rows")
    tp = int(np.count_nonzero(t & p))
    fp = int(np.count_nonzero(~t & p))
    fn = int(np.count_nonzero(t & ~p))
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=int(t.size) - tp - fp - fn)


def safe_ratio(num, den):
    """``num / den``, or ``None`` when the denominator is zero."""
    if den == 0:
        return None
    return num / den


@dataclass(frozen=True)
class ClassificationScores:
    precision: float | None
    recall: float | None
    f1: float | None

    @property
    def precision_defined(self) -> bool:
        return self.precision is not None

    @property
    def recall_defined(self) -> bool:
        return self.recall is not None

    @property
    def f1_defined(self) -> bool:
        return self.f1 is not None

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassificationScores":
        return cls(d["precision"], d["recall"], d["f1"])


def f1_from(precision, recall):
    """Harmonic mean, ``None`` if either input is undefined."""
    if precision is None or recall is None:
        return None
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def scores(cm: ConfusionMatrix) -> ClassificationScores:
    if cm.total == 0:
        raise EmptyInput("scores of an empty confusion matrix")
    precision = safe_ratio(cm.tp, cm.tp + cm.fp)
    recall = safe_ratio(cm.tp, cm.tp + cm.fn)
    return ClassificationScores(precision, recall, f1_from(precision, recall))
