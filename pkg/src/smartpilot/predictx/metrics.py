"""Weighted classification metrics over the anomaly classes.

All values follow the 0-convention: a precision/recall/F1 whose denominator
is zero is reported as 0.0. Weighted averages weight each class by its label
support, so classes absent from the labels contribute nothing.
"""

from __future__ import annotations

from ..kernel import InputError
from .types import AnomalyClass, WeightedMetrics

# B2 plays a detection-only role: every anomalous class collapses into one
# bucket before scoring. NoNose is the bucket key (first anomalous member).
DETECTION_BUCKET = AnomalyClass.NoNose


def compute_weighted_metrics(predictions, labels) -> WeightedMetrics:
    """Per-class and support-weighted precision/recall/F1 plus accuracy."""
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise InputError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not labels:
        raise InputError("empty evaluation set")
    n = len(labels)
    per_class = {}
    w_precision = w_recall = w_f1 = 0.0
    correct = 0
    for p, t in zip(predictions, labels):
        if p == t:
            correct += 1
    for cls in AnomalyClass:
        tp = sum(1 for p, t in zip(predictions, labels) if p == cls and t == cls)
        fp = sum(1 for p, t in zip(predictions, labels) if p == cls and t != cls)
        fn = sum(1 for p, t in zip(predictions, labels) if p != cls and t == cls)
        support = tp + fn
        precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        recall = tp / support if support > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
        per_class[cls] = (precision, recall, f1, support)
        w_precision += support * precision
        w_recall += support * recall
        w_f1 += support * f1
    return WeightedMetrics(
        precision=w_precision / n,
        recall=w_recall / n,
        f1=w_f1 / n,
        accuracy=correct / n,
        support=n,
        per_class=per_class,
    )


def compute_detection_metrics(predictions, labels) -> WeightedMetrics:
    """Binary anomaly-vs-normal scoring (the B2 report role)."""
    collapse = lambda c: DETECTION_BUCKET if c.is_anomalous else AnomalyClass.Normal
    return compute_weighted_metrics([collapse(p) for p in predictions], [collapse(t) for t in labels])
