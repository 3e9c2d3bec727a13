"""REST + WebSocket serving layer over immutable model snapshots.

create_app wires a FastAPI app around a fusion-model snapshot, an ontology,
a Q&A index, and optional forecast results; serve() runs it under uvicorn,
optionally feeding a replay file onto the bus in the background.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from smartpilot.foresight import ForecastResult, improvement
from smartpilot.infoguide import (
    Answer,
    Index,
    InfoConfig,
    KeywordSet,
    answer,
    build_index,
    ingest_manual,
    load_keywords,
)
from smartpilot.ontology import ProcessOntology, load_ontology
from smartpilot.predictx import FusionModel

from .bridge import INSIGHTS_TOPIC, InsightBridge
from .bus import MessageBus
from .ingest import FRAMES_TOPIC, read_replay, replay
from .pipeline import PREDICTIONS_TOPIC, FrameConsumer, PredictionPipeline, PredictionRecord
from .types import AnomalyInsight, LiveState

AGENTS = ("predictx", "foresight", "infoguide")
FORECASTS_TOPIC = "forecasts"


@dataclass
class Facility:
    """One plant's Q&A surface: its ontology plus its manual index."""

    name: str
    ontology: ProcessOntology
    index: Index


@dataclass
class ServeConfig:
    """Everything the serving layer needs, all read-only after startup."""

    model: FusionModel
    ontology: ProcessOntology
    channel_names: Sequence[str]
    index: Index
    keywords: Optional[KeywordSet] = None
    forecast_results: Mapping[str, ForecastResult] = field(default_factory=dict)
    forecast_baselines: Mapping[str, ForecastResult] = field(default_factory=dict)
    generator_client: Optional[object] = None
    info_config: InfoConfig = field(default_factory=InfoConfig)
    insight_window: int = 10
    insight_threshold: float = 0.3
    facility_name: str = "default"
    log_path: Optional[object] = None
    recent_capacity: int = 1000


def api_error(status_code: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status_code, detail={"code": code, "message": message})


def prediction_view(record: PredictionRecord) -> dict:
    r = record.result
    return {
        "id": record.prediction_id,
        "timestamp": record.timestamp,
        "facility_id": record.facility_id,
        "state_id": record.state_id,
        "predicted_class": r.predicted_class.name,
        "anomalous": r.predicted_class.is_anomalous,
        "class_probs": [float(p) for p in r.class_probs],
        "next_frame": [float(v) for v in r.next_frame],
    }


def forecast_view(result: ForecastResult, baseline: Optional[ForecastResult] = None) -> dict:
    view = {
        "product": result.product_id,
        "forecasts": [float(v) for v in result.forecasts],
        "actuals": [float(v) for v in result.actuals],
        "mae": float(result.mae),
        "rmse": float(result.rmse),
        "avg_forecast": float(result.avg_forecast),
        "avg_actual": float(result.avg_actual),
    }
    if baseline is not None:
        gain = improvement(baseline, result)
        view["baseline"] = {"mae": float(baseline.mae), "rmse": float(baseline.rmse)}
        view["improvement_pct"] = None if gain is None else float(gain)
    return view


def insight_view(insight: AnomalyInsight) -> dict:
    return {
        "window_anomaly_rate": float(insight.window_anomaly_rate),
        "degraded": bool(insight.degraded),
        "recent_classes": [c.name for c in insight.recent_classes],
    }


def answer_view(ans: Answer, index: Index) -> dict:
    contexts = []
    for r in ans.contexts:
        entry = {
            "chunk_id": r.chunk_id,
            "combined": float(r.combined),
            "neural_score": float(r.neural_score),
            "symbolic_score": float(r.symbolic_score),
        }
        chunk = index.get(r.chunk_id)
        if chunk is not None:
            entry["text"] = chunk.text
        contexts.append(entry)
    return {
        "status": ans.status,
        "text": ans.text,
        "generator": ans.generator,
        "latency_ms": float(ans.latency_ms),
        "contexts": contexts,
    }


def _payload_view(payload: object) -> dict:
    if isinstance(payload, PredictionRecord):
        return prediction_view(payload)
    if isinstance(payload, ForecastResult):
        return forecast_view(payload)
    if isinstance(payload, AnomalyInsight):
        return insight_view(payload)
    raise TypeError(f"no live view for payload type {type(payload).__name__}")


_EVENT_KINDS = {
    PREDICTIONS_TOPIC: "prediction",
    FORECASTS_TOPIC: "forecast",
    INSIGHTS_TOPIC: "insight",
}


class LiveHub:
    """Pumps bus events into per-websocket asyncio queues as JSON text."""

    def __init__(self, bus: MessageBus, capacity: int = 512):
        self._subs = {topic: bus.subscribe(topic, capacity=capacity) for topic in _EVENT_KINDS}
        self._clients = set()
        self._clients_lock = threading.Lock()
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    async def start(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._thread = threading.Thread(target=self._pump, name="live-hub", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        for sub in self._subs.values():
            sub.close()

    def register(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=512)
        with self._clients_lock:
            self._clients.add(q)
        return q

    def unregister(self, q: asyncio.Queue) -> None:
        with self._clients_lock:
            self._clients.discard(q)

    def _pump(self) -> None:
        while not self._stop.is_set():
            moved = False
            for topic, sub in self._subs.items():
                while True:
                    msg = sub.try_get()
                    if msg is None:
                        break
                    moved = True
                    event = json.dumps(
                        {"kind": _EVENT_KINDS[topic], "seq": msg.seq,
                         "payload": _payload_view(msg.payload)},
                        sort_keys=True,
                    )
                    with self._clients_lock:
                        clients = list(self._clients)
                    if self._loop is not None:
                        for q in clients:
                            self._loop.call_soon_threadsafe(self._push, q, event)
            if not moved:
                time.sleep(0.02)

    @staticmethod
    def _push(q: asyncio.Queue, event: str) -> None:
        try:
            q.put_nowait(event)
        except asyncio.QueueFull:
            pass  # slow client: drop rather than stall the hub


def _load_facility(name: str, manuals_dir, ontology_path, keywords: KeywordSet,
                   info_config: InfoConfig, client=None) -> Facility:
    manuals = sorted(Path(manuals_dir).glob("*.txt"))
    if not manuals:
        raise ValueError(f"no .txt manuals found in {manuals_dir}")
    chunks = []
    for path in manuals:
        chunks.extend(
            ingest_manual(path.read_text(), keywords, source_doc=path.stem,
                          embed_dim=info_config.embed_dim)
        )
    index = build_index(chunks, keywords, client=client, cfg=info_config)
    ontology = load_ontology(ontology_path)
    return Facility(name=name, ontology=ontology, index=index)


def create_app(cfg: ServeConfig, *, bus: Optional[MessageBus] = None,
               live: Optional[LiveState] = None) -> FastAPI:
    bus = bus if bus is not None else MessageBus()
    live = live if live is not None else LiveState()
    keywords = cfg.keywords if cfg.keywords is not None else load_keywords()
    bridge = InsightBridge(window=cfg.insight_window, threshold=cfg.insight_threshold)
    pipeline = PredictionPipeline(
        cfg.model, cfg.ontology, cfg.channel_names,
        bus=bus, live=live, bridge=bridge,
        log_path=cfg.log_path, recent_capacity=cfg.recent_capacity,
    )
    hub = LiveHub(bus)
    consumer = FrameConsumer(bus, pipeline)
    facilities = {cfg.facility_name: Facility(cfg.facility_name, cfg.ontology, cfg.index)}

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        await hub.start()
        consumer.start()
        for product in sorted(cfg.forecast_results):
            result = cfg.forecast_results[product]
            live.update(forecast=result)
            bus.publish(FORECASTS_TOPIC, result)
        yield
        consumer.stop()
        hub.stop()
        pipeline.close()

    app = FastAPI(title="smartpilot", lifespan=lifespan)
    app.state.bus = bus
    app.state.live = live
    app.state.pipeline = pipeline
    app.state.facilities = facilities
    app.state.config = cfg

    @app.exception_handler(HTTPException)
    async def _structured_error(request, exc: HTTPException):
        detail = exc.detail
        if not (isinstance(detail, dict) and "code" in detail):
            detail = {"code": "error", "message": str(detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.middleware("http")
    async def _latency_header(request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        response.headers["X-Latency-Ms"] = f"{(time.perf_counter() - start) * 1000.0:.2f}"
        return response

    @app.get("/api/health")
    async def health():
        return {"status": "ok", "agents": list(AGENTS)}

    @app.get("/api/anomalies/recent")
    async def anomalies_recent(n: int = 50):
        if not 1 <= n <= cfg.recent_capacity:
            raise api_error(400, "bad_request", f"n must be in [1, {cfg.recent_capacity}]")
        return {"predictions": [prediction_view(r) for r in pipeline.recent(n)]}

    @app.get("/api/explain/{prediction_id}")
    async def explain_prediction(prediction_id: str):
        record = pipeline.get(prediction_id)
        if record is None:
            raise api_error(404, "unknown_prediction", f"no prediction {prediction_id!r} in the recent buffer")
        expl = pipeline.explain_record(record)
        return {
            "id": record.prediction_id,
            "state_id": expl.state_id,
            "predicted_class": record.result.predicted_class.name,
            "responsible_variables": [
                {"variable": name, "observed": obs, "expected_lo": lo, "expected_hi": hi}
                for name, obs, lo, hi in expl.responsible_variables
            ],
            "robot_functions": expl.robot_functions,
            "possible_misclassification": expl.possible_misclassification,
        }

    @app.get("/api/forecast")
    async def forecast(product: Optional[str] = None):
        if product is None:
            return {"products": sorted(cfg.forecast_results)}
        result = cfg.forecast_results.get(product)
        if result is None:
            raise api_error(404, "unknown_product", f"no forecast for product {product!r}")
        return forecast_view(result, cfg.forecast_baselines.get(product))

    @app.post("/api/ask")
    async def ask(body: dict):
        query = body.get("query")
        if not isinstance(query, str) or not query.strip():
            raise api_error(400, "bad_request", "body must carry a non-empty 'query' string")
        facility_name = body.get("facility", cfg.facility_name)
        facility = facilities.get(facility_name)
        if facility is None:
            raise api_error(400, "unknown_facility", f"no facility {facility_name!r}")
        ans = answer(
            query,
            facility.index,
            cfg.info_config,
            client=cfg.generator_client,
            live=live.snapshot(),
            keywords=keywords,
        )
        return answer_view(ans, facility.index)

    @app.get("/api/facility")
    async def list_facilities():
        return {"facilities": sorted(facilities), "default": cfg.facility_name}

    @app.post("/api/facility")
    async def add_facility(body: dict):
        for key in ("name", "manuals_dir", "ontology_path"):
            if not isinstance(body.get(key), str) or not body[key].strip():
                raise api_error(400, "bad_request", f"body must carry a non-empty {key!r} string")
        name = body["name"]
        if name in facilities:
            raise api_error(400, "duplicate_facility", f"facility {name!r} already exists")
        try:
            facility = _load_facility(
                name, body["manuals_dir"], body["ontology_path"],
                keywords, cfg.info_config, client=cfg.generator_client,
            )
        except Exception as exc:
            raise api_error(400, "invalid_facility", str(exc))
        facilities[name] = facility
        return {
            "name": name,
            "n_chunks": len(facility.index),
            "n_states": len(facility.ontology.states),
        }

    @app.websocket("/ws/live")
    async def ws_live(ws: WebSocket):
        await ws.accept()
        q = hub.register()
        try:
            while True:
                event = await q.get()
                await ws.send_text(event)
        except WebSocketDisconnect:
            pass
        finally:
            hub.unregister(q)

    return app


def serve(cfg: ServeConfig, host: str = "127.0.0.1", port: int = 8077, *,
          replay_path=None, rate: Optional[float] = None) -> None:
    """Run the service; optionally stream a replay file onto the bus."""
    import uvicorn

    bus = MessageBus()
    live = LiveState()
    app = create_app(cfg, bus=bus, live=live)
    if replay_path is not None:
        frames, _ = read_replay(replay_path)

        def _feed():
            time.sleep(0.5)  # allow startup to wire the consumers first
            replay(frames, bus, rate=rate, topic=FRAMES_TOPIC)

        threading.Thread(target=_feed, name="replay-feed", daemon=True).start()
    uvicorn.run(app, host=host, port=port, log_level="warning")
