"""Confusion matrices and the scalar metrics reported for each experiment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    def __init__(self, class_names: Sequence[str], counts=None):
        self.class_names = tuple(class_names)
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        c = len(self.class_names)
        if counts is None:
            self.counts = np.zeros((c, c), dtype=np.int64)
        else:
            counts = np.array(counts, dtype=np.int64)
            if counts.shape != (c, c):
                raise ValueError(f"counts must be {c}x{c}, got {counts.shape}")
            if (counts < 0).any():
                raise ValueError("counts must be nonnegative")
            self.counts = counts
        self._index = {name: i for i, name in enumerate(self.class_names)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise ValueError(f"unknown label {label!r}") from None

    def accumulate(self, true_label: str, predicted: str) -> "ConfusionMatrix":
        self.counts[self.index(true_label), self.index(predicted)] += 1
        return self

    def update(self, pairs: Iterable[tuple[str, str]]) -> "ConfusionMatrix":
        for t, p in pairs:
            self.accumulate(t, p)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.class_names != self.class_names:
            raise ValueError("cannot merge matrices with different classes")
        return ConfusionMatrix(self.class_names, self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConfusionMatrix)
            and self.class_names == other.class_names
            and np.array_equal(self.counts, other.counts)
        )

    def __repr__(self) -> str:
        return f"ConfusionMatrix({list(self.class_names)}, {self.counts.tolist()})"

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.counts)

    @property
    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class PerClass:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    precision_degenerate: np.ndarray
    recall_degenerate: np.ndarray


def _safe_div(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    degenerate = den == 0
    out = np.divide(num, den, out=np.zeros_like(num), where=~degenerate)
    return out, degenerate


def precision_recall(cm: ConfusionMatrix) -> PerClass:
    """Per-class precision, recall and F1; 0/0 yields 0 and sets a flag."""
    tp = cm.tp
    p, p_deg = _safe_div(tp, tp + cm.fp)
    r, r_deg = _safe_div(tp, tp + cm.fn)
    f1, _ = _safe_div(2.0 * p * r, p + r)
    return PerClass(p, r, f1, p_deg, r_deg)


def macro_f1(cm: ConfusionMatrix) -> float:
    # Conventional per-class F1 = 2pr/(p+r), averaged with equal class weight.
    return float(np.mean(precision_recall(cm).f1))


def unweighted_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts) / cm.total)


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    rows = cm.counts.sum(axis=1)
    empty = [cm.class_names[i] for i in np.flatnonzero(rows == 0)]
    if empty:
        raise ValueError(f"balanced accuracy undefined: no true samples for {empty}")
    return float(np.mean(cm.tp / rows))


@dataclass(frozen=True)
class IoUResult:
    value: float
    degenerate: bool

    def __float__(self) -> float:
        return self.value


def iou(a: np.ndarray, b: np.ndarray) -> IoUResult:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return IoUResult(1.0, True)
    return IoUResult(np.count_nonzero(a & b) / union, False)


def report(cm: ConfusionMatrix) -> dict:
    """JSON-ready summary of a confusion matrix."""
    pc = precision_recall(cm)
    flags = []
    for i, name in enumerate(cm.class_names):
        if pc.precision_degenerate[i]:
            flags.append(f"precision_undefined:{name}")
        if pc.recall_degenerate[i]:
            flags.append(f"recall_undefined:{name}")
    try:
        bal = balanced_accuracy(cm)
    except ValueError:
        bal = None
    return {
        "class_names": list(cm.class_names),
        "counts": cm.counts.tolist(),
        "per_class": {
            name: {
                "precision": float(pc.precision[i]),
                "recall": float(pc.recall[i]),
                "f1": float(pc.f1[i]),
            }
            for i, name in enumerate(cm.class_names)
        },
        "macro_f1": macro_f1(cm),
        "unweighted_accuracy": unweighted_accuracy(cm) if cm.total else None,
        "balanced_accuracy": bal,
        "degeneracy_flags": flags,
    }
