"""Prediction-to-forecasting insight bridge.

Maintains a sliding window over predicted classes and emits AnomalyInsight
summaries; the forecasting agent can take the rate up as an extra structured
feature named "anomaly_rate".
"""

from __future__ import annotations

import collections

import numpy as np

from smartpilot.foresight import StructuredFeatures
from smartpilot.predictx import AnomalyClass

from .types import AnomalyInsight

INSIGHTS_TOPIC = "insights"
DEFAULT_WINDOW = 10
DEFAULT_THRESHOLD = 0.3
ANOMALY_RATE_FEATURE = "anomaly_rate"


class InsightBridge:
    """Turns a stream of predictions into sliding-window anomaly insights."""

    def __init__(self, window: int = DEFAULT_WINDOW, threshold: float = DEFAULT_THRESHOLD):
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {threshold}")
        self.window = window
        self.threshold = threshold
        self._recent = collections.deque(maxlen=window)

    def observe(self, predicted) -> AnomalyInsight:
        """Fold one prediction (result or class) into the window."""
        cls = AnomalyClass(getattr(predicted, "predicted_class", predicted))
        self._recent.append(cls)
        classes = tuple(self._recent)
        rate = sum(1 for c in classes if c.is_anomalous) / len(classes)
        return AnomalyInsight(
            window_anomaly_rate=rate,
            recent_classes=classes,
            degraded=rate > self.threshold,
        )

    def reset(self) -> None:
        self._recent.clear()


def attach_anomaly_rate(features: StructuredFeatures, rates) -> StructuredFeatures:
    """Append the bridge's rate series as a structured-feature column."""
    col = np.asarray(rates, dtype=np.float64).reshape(-1)
    if col.shape[0] != features.matrix.shape[0]:
        raise ValueError(
            f"{col.shape[0]} rates for {features.matrix.shape[0]} feature rows"
        )
    if np.any(col < 0.0) or np.any(col > 1.0):
        raise ValueError("anomaly rates must lie in [0, 1]")
    return StructuredFeatures(
        names=tuple(features.names) + (ANOMALY_RATE_FEATURE,),
        matrix=np.hstack([features.matrix, col.reshape(-1, 1)]),
    )
