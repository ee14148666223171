"""Sentiment regression metrics and the 7-class confusion matrix."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

CLASS_NAMES = ("HN", "N", "WN", "NT", "WP", "P", "HP")  # -3 .. +3
BINARY_CONVENTION = "non-zero labels only; positive iff value > 0"


def class7(values) -> np.ndarray:
    """Round to the nearest integer (half to even) and clip to [-3, 3]."""
    return np.clip(np.round(np.asarray(values, dtype=np.float64)), -3, 3).astype(int)


def class5(values) -> np.ndarray:
    return np.clip(np.round(np.asarray(values, dtype=np.float64)), -2, 2).astype(int)


@dataclass
class MetricReport:
    acc7: float
    acc5: float
    acc2: float
    f1: float
    corr: float
    mae: float
    confusion7: list[list[int]]
    per_class_acc: list[float]
    n: int
    flags: list[str] = field(default_factory=list)
    binary_convention: str = BINARY_CONVENTION

    def to_dict(self) -> dict:
        return asdict(self)

    def table_row(self) -> list[float]:
        """Acc-7, Acc-5, Acc-2, F1, Corr, MAE."""
        return [self.acc7, self.acc5, self.acc2, self.f1, self.corr, self.mae]


def confusion_matrix(preds, labels) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Rows are true classes HN..HP, columns predicted classes.

    Returns (7x7 counts, per-class accuracy, flags); empty rows get
    accuracy 0 and a flag.
    """
    t, p = class7(labels) + 3, class7(preds) + 3
    mat = np.zeros((7, 7), dtype=np.int64)
    np.add.at(mat, (t, p), 1)
    rows = mat.sum(axis=1)
    acc = np.where(rows > 0, np.diag(mat) / np.maximum(rows, 1), 0.0)
    flags = [f"empty_class_{CLASS_NAMES[i]}" for i in range(7) if rows[i] == 0]
    return mat, acc, flags


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    """Pearson correlation, or None when either side has no spread."""
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(np.sum(da * da)), np.sqrt(np.sum(db * db))
    if sa == 0.0 or sb == 0.0:
        return None
    # normalise first so tiny spreads cannot underflow the product
    r = float(np.sum((da / sa) * (db / sb)))
    return min(1.0, max(-1.0, r))


def compute_metrics(preds, labels) -> MetricReport:
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError(f"preds {preds.shape} and labels {labels.shape} must be equal 1-D shapes")
    if preds.size == 0:
        raise ValueError("cannot evaluate an empty split")
    flags: list[str] = []

    acc7 = float(np.mean(class7(preds) == class7(labels)))
    acc5 = float(np.mean(class5(preds) == class5(labels)))

    nz = labels != 0
    if nz.any():
        y_pos = labels[nz] > 0
        p_pos = preds[nz] > 0
        acc2 = float(np.mean(y_pos == p_pos))
        tp = int(np.sum(y_pos & p_pos))
        fp = int(np.sum(~y_pos & p_pos))
        fn = int(np.sum(y_pos & ~p_pos))
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    else:
        acc2 = f1 = 0.0
        flags.append("acc2_undefined_all_labels_zero")

    corr = _pearson(preds, labels)
    if corr is None:
        corr = 0.0
        flags.append("corr_undefined_constant_input")

    mae = float(np.mean(np.abs(preds - labels)))
    mat, per_class, cflags = confusion_matrix(preds, labels)
    return MetricReport(
        acc7=acc7, acc5=acc5, acc2=acc2, f1=float(f1), corr=corr, mae=mae,
        confusion7=mat.tolist(), per_class_acc=per_class.tolist(), n=int(preds.size),
        flags=flags + cflags,
    )
