"""Message and state types shared by the agent runtime."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Mapping, Optional, Union

from smartpilot.foresight import ForecastResult
from smartpilot.predictx import AnomalyClass, PredictionResult

# Reserved tag carrying the cycle-state name; every other tag is numeric.
STATE_TAG = "state"

Scalar = Union[float, str]


def now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class TagUpdate:
    """One named data point from the plant stream."""

    tag: str
    value: Scalar
    timestamp: int
    facility_id: str

    def __post_init__(self):
        if not self.tag:
            raise ValueError("tag must be non-empty")
        if not isinstance(self.timestamp, int) or self.timestamp < 0:
            raise ValueError(f"timestamp must be a non-negative integer, got {self.timestamp!r}")


@dataclass(frozen=True)
class TagFrame:
    """All tag updates sharing one timestamp, grouped for the pipeline.

    channels holds every numeric tag; state_id is the value of the reserved
    state tag, or None when the frame carried none.
    """

    timestamp: int
    facility_id: str
    state_id: Optional[str]
    channels: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "channels", dict(self.channels))


@dataclass(frozen=True)
class AgentMessage:
    """Envelope for one bus delivery; seq is strictly increasing per topic."""

    topic: str
    payload: object
    seq: int
    emitted_at: int

    def __post_init__(self):
        if not self.topic:
            raise ValueError("topic must be non-empty")
        if self.seq < 1:
            raise ValueError("seq starts at 1")


@dataclass(frozen=True)
class AnomalyInsight:
    """Sliding-window anomaly summary fed from predictions to forecasting."""

    window_anomaly_rate: float
    recent_classes: tuple
    degraded: bool

    def __post_init__(self):
        object.__setattr__(self, "recent_classes", tuple(AnomalyClass(c) for c in self.recent_classes))
        r = self.window_anomaly_rate
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"anomaly rate must be in [0, 1], got {r}")
        if self.recent_classes:
            expected = sum(1 for c in self.recent_classes if c.is_anomalous) / len(self.recent_classes)
        else:
            expected = 0.0
        if abs(r - expected) > 1e-9:
            raise ValueError(f"rate {r} inconsistent with recent classes (expected {expected})")


@dataclass(frozen=True)
class LiveSnapshot:
    """One immutable point-in-time view of the live store."""

    latest_prediction: Optional[PredictionResult]
    latest_forecast: Optional[ForecastResult]
    latest_insight: Optional[AnomalyInsight]
    updated_at: int


_UNSET = object()


class LiveState:
    """Single-writer, multi-reader live store.

    Updates swap in a whole new snapshot, so readers can never observe a
    half-written record; updated_at is monotone.
    """

    def __init__(self):
        self._snap = LiveSnapshot(None, None, None, 0)
        self._lock = threading.Lock()

    def snapshot(self) -> LiveSnapshot:
        return self._snap

    def update(self, *, prediction=_UNSET, forecast=_UNSET, insight=_UNSET,
               timestamp: Optional[int] = None) -> LiveSnapshot:
        with self._lock:
            cur = self._snap
            stamp = now_ms() if timestamp is None else int(timestamp)
            snap = LiveSnapshot(
                latest_prediction=cur.latest_prediction if prediction is _UNSET else prediction,
                latest_forecast=cur.latest_forecast if forecast is _UNSET else forecast,
                latest_insight=cur.latest_insight if insight is _UNSET else insight,
                updated_at=max(stamp, cur.updated_at),
            )
            self._snap = snap
        return snap

    @property
    def latest_prediction(self):
        return self._snap.latest_prediction

    @property
    def latest_forecast(self):
        return self._snap.latest_forecast

    @property
    def latest_insight(self):
        return self._snap.latest_insight

    @property
    def updated_at(self) -> int:
        return self._snap.updated_at
