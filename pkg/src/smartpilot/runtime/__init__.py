"""Agent runtime: message bus, ingestion, live state, insight bridge, serving."""

from .bridge import (
    ANOMALY_RATE_FEATURE,
    DEFAULT_THRESHOLD,
    DEFAULT_WINDOW,
    INSIGHTS_TOPIC,
    InsightBridge,
    attach_anomaly_rate,
)
from .bus import DEFAULT_CAPACITY, MessageBus, Subscription
from .ingest import (
    FRAMES_TOPIC,
    ReplayStats,
    ReplayWarning,
    SocketIngest,
    format_replay_line,
    group_frames,
    parse_replay_line,
    read_replay,
    replay,
    replay_file,
    write_replay,
)
from .pipeline import (
    IMAGE_TAG_PREFIX,
    PREDICTIONS_TOPIC,
    FrameConsumer,
    OfflineReplayStats,
    PipelineWarning,
    PredictionPipeline,
    PredictionRecord,
    log_line,
    replay_offline,
)
from .server import (
    AGENTS,
    FORECASTS_TOPIC,
    Facility,
    LiveHub,
    ServeConfig,
    answer_view,
    create_app,
    forecast_view,
    insight_view,
    prediction_view,
    serve,
)
from .types import (
    STATE_TAG,
    AgentMessage,
    AnomalyInsight,
    LiveSnapshot,
    LiveState,
    TagFrame,
    TagUpdate,
    now_ms,
)

__all__ = [
    "AGENTS",
    "ANOMALY_RATE_FEATURE",
    "AgentMessage",
    "AnomalyInsight",
    "DEFAULT_CAPACITY",
    "DEFAULT_THRESHOLD",
    "DEFAULT_WINDOW",
    "FORECASTS_TOPIC",
    "FRAMES_TOPIC",
    "Facility",
    "FrameConsumer",
    "IMAGE_TAG_PREFIX",
    "INSIGHTS_TOPIC",
    "InsightBridge",
    "LiveHub",
    "LiveSnapshot",
    "LiveState",
    "MessageBus",
    "OfflineReplayStats",
    "PREDICTIONS_TOPIC",
    "PipelineWarning",
    "PredictionPipeline",
    "PredictionRecord",
    "ReplayStats",
    "ReplayWarning",
    "STATE_TAG",
    "ServeConfig",
    "SocketIngest",
    "Subscription",
    "TagFrame",
    "TagUpdate",
    "answer_view",
    "attach_anomaly_rate",
    "create_app",
    "forecast_view",
    "format_replay_line",
    "group_frames",
    "insight_view",
    "log_line",
    "now_ms",
    "parse_replay_line",
    "prediction_view",
    "read_replay",
    "replay",
    "replay_file",
    "replay_offline",
    "serve",
    "write_replay",
]
