"""Chunk summarization: external generator when available, extractive fallback.

The generator client protocol is a single JSON request/response pair:
request {template_id, query, contexts[]} -> response {text}. Any HTTP server
implementing it can be plugged in; failures and timeouts always degrade to
the deterministic extractive fallback, never to a hard error.
"""

from __future__ import annotations

import json
import urllib.request
import warnings
from dataclasses import dataclass
from typing import Optional

from .keywords import keyword_lemmas
from .text import lemma_tokens, split_sentences
from .types import KeywordSet


@dataclass
class Summary:
    text: str
    generator: str  # external_llm | extractive_fallback


class HttpGeneratorClient:
    """Minimal client for the {template_id, query, contexts} -> {text} protocol."""

    def __init__(self, url: str, timeout: float = 2.0):
        self.url = url
        self.timeout = timeout

    def generate(self, template_id: str, query: str, contexts) -> str:
        payload = json.dumps(
            {"template_id": template_id, "query": query, "contexts": list(contexts)}
        ).encode()
        req = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            doc = json.loads(resp.read().decode())
        return doc["text"]


def _rank_sentences(text: str, kw_lemmas: frozenset, top_n: int) -> list:
    """Pick top_n sentences by keyword-hit count (position breaks ties), then
    restore document order."""
    sentences = split_sentences(text)
    scored = []
    for pos, s in enumerate(sentences):
        hits = sum(1 for t in set(lemma_tokens(s)) if t in kw_lemmas)
        scored.append((-hits, pos, s))
    scored.sort()
    chosen = sorted(scored[:top_n], key=lambda item: item[1])
    return [s for _, _, s in chosen]


def extractive_summary(chunks, keywords: KeywordSet, top_n: int = 2) -> str:
    kw = keyword_lemmas(keywords)
    parts = []
    for ch in chunks:
        parts.extend(_rank_sentences(ch.text, kw, top_n))
    return " ".join(parts)


def summarize(
    chunks,
    keywords: KeywordSet,
    client=None,
    top_n: int = 2,
    query: str = "",
) -> Summary:
    """Summarize chunks into one context document."""
    if not chunks:
        raise ValueError("summarize needs at least one chunk")
    if client is not None:
        try:
            text = client.generate("summarize", query, [c.text for c in chunks])
            if text:
                return Summary(text=text, generator="external_llm")
        except Exception as exc:  # timeouts, refusals, protocol errors
            warnings.warn(f"generator client failed ({exc}); using extractive fallback")
    return Summary(text=extractive_summary(chunks, keywords, top_n), generator="extractive_fallback")
