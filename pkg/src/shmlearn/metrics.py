"""Classification and clustering metrics.

Per-class precision/recall/F1 with macro averaging, confusion matrices, and
majority-vote mapping of unsupervised cluster assignments onto hidden class
labels. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "confusion_matrix",
    "precision_recall_f1",
    "macro_f1",
    "ClusterMapping",
    "map_clusters",
    "metric_report",
]


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """K x K count matrix indexed (true, predicted); labels are 1..K."""
    t = np.asarray(y_true, dtype=int)
    p = np.asarray(y_pred, dtype=int)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    if t.size and (t.min() < 1 or t.max() > n_classes or p.min() < 1 or p.max() > n_classes):
        raise ValueError(f"labels must lie in 1..{n_classes}")
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (t - 1, p - 1), 1)
    return cm


def precision_recall_f1(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall and F1 from a confusion matrix.

    Classes with an undefined ratio (no predictions, or no true members)
    contribute 0 by convention.
    """
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return precision, recall, f1


def macro_f1(y_true, y_pred, n_classes: int) -> float:
    """Unweighted mean of per-class F1 scores over classes 1..K."""
    _, _, f1 = precision_recall_f1(confusion_matrix(y_true, y_pred, n_classes))
    return float(f1.mean())


@dataclass(frozen=True)
class ClusterMapping:
    """Many-to-one map from cluster ids onto majority class labels."""

    mapping: dict
    purity: float


def map_clusters(assignments, labels) -> ClusterMapping:
    """Map each cluster to its majority hidden class (ties to the lower id).

    Purity is the fraction of points whose cluster's majority class equals
    their own label. Several clusters may map to one class; the inverse
    need not exist.
    """
    z = np.asarray(assignments)
    y = np.asarray(labels)
    if z.shape != y.shape:
        raise ValueError(f"length mismatch: {z.shape} vs {y.shape}")
    mapping: dict = {}
    for cid in np.unique(z):
        member_labels = y[z == cid]
        classes, counts = np.unique(member_labels, return_counts=True)
        mapping[cid] = int(classes[np.argmax(counts)])  # unique() sorts, so ties fall low
    mapped = np.array([mapping[c] for c in z]) if z.size else np.empty(0, dtype=int)
    purity = float(np.mean(mapped == y)) if z.size else 0.0
    return ClusterMapping(mapping=mapping, purity=purity)


def metric_report(y_true, y_pred, n_classes: int, purity: float | None = None) -> dict:
    """JSON-serialisable report: per-class P/R/F1, macro-F1, confusion matrix."""
    cm = confusion_matrix(y_true, y_pred, n_classes)
    precision, recall, f1 = precision_recall_f1(cm)
    report = {
        "n_classes": int(n_classes),
        "precision": precision.tolist(),
        "recall": recall.tolist(),
        "f1": f1.tolist(),
        "macro_f1": float(f1.mean()),
        "confusion_matrix": cm.tolist(),
    }
    if purity is not None:
        report["purity"] = float(purity)
    return report
