"""Query answering: live-state templates, retrieval, refusal, generation.

Live-state intents (current anomaly status, production forecast) bypass
retrieval and answer deterministically from the runtime's latest snapshot.
Everything else retrieves; when the best combined score stays below tau the
agent refuses rather than risk a fabricated answer.
"""

from __future__ import annotations

import re
import time
import warnings
from typing import Optional

from .retrieval import retrieve
from .summarize import extractive_summary
from .types import Answer, Chunk, InfoConfig, KeywordSet

_ANOMALY_WORD = re.compile(r"anomal|defect", re.IGNORECASE)
_FORECAST_WORD = re.compile(r"forecast|production output|units next", re.IGNORECASE)
_STATE_WORD = re.compile(r"status|current|now|latest|recent|rate|next", re.IGNORECASE)


def match_live_intent(query: str) -> Optional[str]:
    """'anomaly' / 'forecast' when the query asks about the live state."""
    if _ANOMALY_WORD.search(query) and _STATE_WORD.search(query):
        return "anomaly"
    if _FORECAST_WORD.search(query) and _STATE_WORD.search(query):
        return "forecast"
    return None


def _render_live(intent: str, live) -> str:
    if intent == "anomaly":
        pred = getattr(live, "latest_prediction", None)
        if pred is None:
            return "No anomaly prediction is available yet."
        prob = float(pred.class_probs[int(pred.predicted_class)])
        text = (
            f"Current anomaly status: {pred.predicted_class.name} "
            f"(probability {prob:.2f})."
        )
        insight = getattr(live, "latest_insight", None)
        if insight is not None:
            text += f" Anomaly rate over the recent window: {insight.window_anomaly_rate:.2f}."
        return text
    fc = getattr(live, "latest_forecast", None)
    if fc is None:
        return "No production forecast is available yet."
    return (
        f"Next-period production forecast for {fc.product_id}: "
        f"{float(fc.forecasts[-1]):.1f} units (MAE {fc.mae:.2f})."
    )


def answer(
    query: str,
    index,
    cfg: InfoConfig = InfoConfig(),
    client=None,
    live=None,
    keywords: Optional[KeywordSet] = None,
) -> Answer:
    """Answer one query against the index (and the live view when attached)."""
    t0 = time.perf_counter()

    def done(a: Answer) -> Answer:
        a.latency_ms = (time.perf_counter() - t0) * 1000.0
        return a

    intent = match_live_intent(query)
    if intent is not None and live is not None:
        return done(
            Answer(
                status="answered",
                text=_render_live(intent, live),
                contexts=[],
                generator="live_state_template",
            )
        )

    entries = index.entries if hasattr(index, "entries") else index
    results = retrieve(query, entries, cfg.k, cfg.alpha)
    if not results or results[0].combined < cfg.tau:
        return done(Answer(status="refused", text=None, contexts=results, generator=None))

    context_texts = []
    for r in results:
        e = index.entry(r.chunk_id) if hasattr(index, "entry") else None
        context_texts.append(e.text if e is not None else r.chunk_id)
    if client is not None:
        try:
            text = client.generate("qa", query, context_texts)
            if text:
                return done(
                    Answer(status="answered", text=text, contexts=results, generator="external_llm")
                )
        except Exception as exc:
            warnings.warn(f"generator client failed ({exc}); using extractive fallback")
    if keywords is not None and hasattr(index, "entry"):
        top = index.entry(results[0].chunk_id)
        fallback = extractive_summary([top], keywords) if top else context_texts[0]
    else:
        fallback = context_texts[0]
    return done(
        Answer(status="answered", text=fallback, contexts=results, generator="extractive_fallback")
    )
