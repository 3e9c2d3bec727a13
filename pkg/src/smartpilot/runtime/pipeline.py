"""Streaming prediction loop: tag frames -> rolling windows -> fused predictions.

The pipeline owns the rolling window, assigns deterministic prediction ids,
appends a reproducible JSONL log (latency excluded so reruns are
byte-identical), and fans results out to the bus, the live store, and the
insight bridge when they are attached.
"""

from __future__ import annotations

import collections
import json
import threading
import time
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from smartpilot.ontology import Explanation, ProcessOntology, explain
from smartpilot.predictx import FusionModel, ImageFeatures, PredictionResult, SensorWindow, fuse_predict

from .bridge import INSIGHTS_TOPIC, InsightBridge
from .bus import MessageBus
from .ingest import FRAMES_TOPIC
from .types import LiveState, TagFrame

PREDICTIONS_TOPIC = "predictions"
IMAGE_TAG_PREFIX = "img_"


class PipelineWarning(UserWarning):
    """Raised when an incoming frame cannot be used and is skipped."""


@dataclass(frozen=True)
class PredictionRecord:
    """One served prediction plus the context needed to explain it later."""

    prediction_id: str
    timestamp: int
    facility_id: str
    state_id: str
    observed_frame: np.ndarray
    result: PredictionResult


def log_line(record: PredictionRecord) -> str:
    """Deterministic JSON log row; latency is intentionally excluded."""
    payload = {
        "id": record.prediction_id,
        "timestamp": record.timestamp,
        "facility_id": record.facility_id,
        "state_id": record.state_id,
        "predicted_class": record.result.predicted_class.name,
        "anomalous": record.result.predicted_class.is_anomalous,
        "class_probs": [float(p) for p in record.result.class_probs],
        "next_frame": [float(v) for v in record.result.next_frame],
    }
    return json.dumps(payload, sort_keys=True)


class PredictionPipeline:
    """Feeds tag frames through a fusion model snapshot.

    Image features ride the tag stream as img_0..img_{D-1} tags; frames
    without them fall back to a zero image vector.
    """

    def __init__(self, model: FusionModel, onto: ProcessOntology,
                 channel_names: Sequence[str], *,
                 bus: Optional[MessageBus] = None,
                 live: Optional[LiveState] = None,
                 bridge: Optional[InsightBridge] = None,
                 log_path=None, recent_capacity: int = 1000):
        self.model = model
        self.onto = onto
        self.channel_names = tuple(channel_names)
        if len(self.channel_names) != model.n_channels:
            raise ValueError(
                f"{len(self.channel_names)} channel names for a "
                f"{model.n_channels}-channel model"
            )
        self.window_len = model.window_len
        self.variables = list(self.channel_names)
        self._bus = bus
        self._live = live
        self._bridge = bridge
        self._window = collections.deque(maxlen=self.window_len)
        self._recent = collections.deque(maxlen=recent_capacity)
        self._by_id = collections.OrderedDict()
        self._recent_capacity = recent_capacity
        self._lock = threading.Lock()
        self._count = 0
        self.frames_seen = 0
        self.skipped_frames = 0
        self._log = open(log_path, "w") if log_path is not None else None

    def feed(self, frame: TagFrame) -> Optional[PredictionRecord]:
        """Consume one frame; returns a record once the window is full."""
        self.frames_seen += 1
        if frame.state_id is None:
            self.skipped_frames += 1
            warnings.warn(f"frame at {frame.timestamp} has no state tag, skipped", PipelineWarning)
            return None
        missing = [c for c in self.channel_names if c not in frame.channels]
        if missing:
            self.skipped_frames += 1
            warnings.warn(
                f"frame at {frame.timestamp} missing channels {missing}, skipped",
                PipelineWarning,
            )
            return None
        vector = np.array([float(frame.channels[c]) for c in self.channel_names])
        self._window.append((vector, frame.state_id, frame.timestamp))
        if len(self._window) < self.window_len:
            return None

        window = SensorWindow(
            frames=np.stack([v for v, _, _ in self._window]),
            state_ids=tuple(s for _, s, _ in self._window),
            timestamp=frame.timestamp,
        )
        img = np.zeros(self.model.img_dim)
        for i in range(self.model.img_dim):
            tag = f"{IMAGE_TAG_PREFIX}{i}"
            if tag in frame.channels:
                img[i] = float(frame.channels[tag])
        image = ImageFeatures(vector=img, source_camera="stream", timestamp=frame.timestamp)
        result = fuse_predict(self.model, window, image)

        record = PredictionRecord(
            prediction_id=f"p-{self._count:08d}",
            timestamp=frame.timestamp,
            facility_id=frame.facility_id,
            state_id=frame.state_id,
            observed_frame=vector,
            result=result,
        )
        self._count += 1
        with self._lock:
            self._recent.append(record)
            self._by_id[record.prediction_id] = record
            while len(self._by_id) > self._recent_capacity:
                self._by_id.popitem(last=False)
        if self._log is not None:
            self._log.write(log_line(record) + "\n")
        if self._bus is not None:
            self._bus.publish(PREDICTIONS_TOPIC, record)
        if self._live is not None:
            self._live.update(prediction=result, timestamp=frame.timestamp)
        if self._bridge is not None:
            insight = self._bridge.observe(result)
            if self._bus is not None:
                self._bus.publish(INSIGHTS_TOPIC, insight)
            if self._live is not None:
                self._live.update(insight=insight, timestamp=frame.timestamp)
        return record

    @property
    def predictions(self) -> int:
        return self._count

    def recent(self, n: int) -> list:
        """Last n records, newest first."""
        if n < 1:
            raise ValueError("n must be >= 1")
        with self._lock:
            tail = list(self._recent)[-n:]
        return tail[::-1]

    def get(self, prediction_id: str) -> Optional[PredictionRecord]:
        with self._lock:
            return self._by_id.get(prediction_id)

    def explain_record(self, record: PredictionRecord) -> Explanation:
        return explain(record.result, record.observed_frame, record.state_id,
                       self.onto, self.variables)

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None


@dataclass
class OfflineReplayStats:
    frames: int
    predictions: int
    wall_s: float

    @property
    def fps(self) -> float:
        return self.frames / self.wall_s if self.wall_s > 0 else float("inf")


def replay_offline(model: FusionModel, onto: ProcessOntology,
                   channel_names: Sequence[str], frames, log_path=None,
                   **pipeline_kwargs) -> OfflineReplayStats:
    """Run frames through a fresh pipeline as fast as possible."""
    pipeline = PredictionPipeline(model, onto, channel_names,
                                  log_path=log_path, **pipeline_kwargs)
    start = time.perf_counter()
    for frame in frames:
        pipeline.feed(frame)
    wall = time.perf_counter() - start
    pipeline.close()
    return OfflineReplayStats(frames=len(frames), predictions=pipeline.predictions, wall_s=wall)


class FrameConsumer:
    """Background thread pumping bus frames into a pipeline."""

    def __init__(self, bus: MessageBus, pipeline: PredictionPipeline,
                 topic: str = FRAMES_TOPIC, capacity: int = 4096):
        self._sub = bus.subscribe(topic, capacity=capacity)
        self._pipeline = pipeline
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="frame-consumer", daemon=True)

    def start(self) -> "FrameConsumer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._sub.close()
        self._thread.join(timeout=2.0)

    def _run(self) -> None:
        while not self._stop.is_set():
            msg = self._sub.get(timeout=0.2)
            if msg is None:
                if self._sub.closed:
                    return
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", PipelineWarning)
                self._pipeline.feed(msg.payload)
