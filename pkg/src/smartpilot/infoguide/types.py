"""Domain types for the Q&A agent."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class IngestionError(ValueError):
    """Document unusable (empty after cleaning)."""


GENERATORS = ("external_llm", "extractive_fallback", "live_state_template")


@dataclass(frozen=True)
class ChunkConfig:
    max_chars: int = 1200
    overlap: int = 100

    def __post_init__(self):
        if self.max_chars < 1 or not (0 <= self.overlap < self.max_chars):
            raise ValueError(f"invalid chunking config {self}")


@dataclass(frozen=True)
class InfoConfig:
    """Retrieval/answering knobs (all calibration defaults)."""

    k: int = 3
    alpha: float = 0.7
    tau: float = 0.25
    select_threshold: float = 0.35
    embed_dim: int = 256
    summary_sentences: int = 2

    def __post_init__(self):
        if self.k < 1 or not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"invalid retrieval config {self}")


@dataclass
class Chunk:
    """One retrievable unit of manual text with its hashed-TF embedding."""

    chunk_id: str
    text: str
    source_doc: str = ""
    keywords_hit: frozenset = frozenset()
    embedding: np.ndarray = None

    def __post_init__(self):
        if not self.text:
            raise IngestionError("chunk text must be non-empty")
        self.keywords_hit = frozenset(self.keywords_hit)
        if self.embedding is not None:
            self.embedding = np.asarray(self.embedding, dtype=np.float64)
            norm = float(np.linalg.norm(self.embedding))
            if norm != 0.0 and abs(norm - 1.0) > 1e-9:
                raise ValueError(f"embedding norm {norm} not in {{0}} or 1 +- 1e-9")


@dataclass(frozen=True)
class KeywordSet:
    """Seed keywords plus their synonym expansion (all lowercase, trimmed)."""

    seeds: tuple
    expanded: frozenset

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(s.strip().lower() for s in self.seeds))
        object.__setattr__(
            self, "expanded", frozenset(e.strip().lower() for e in self.expanded) | set(self.seeds)
        )


@dataclass(frozen=True)
class RetrievalResult:
    chunk_id: str
    neural_score: float
    symbolic_score: float
    combined: float


@dataclass
class Answer:
    """Outcome of one query: answered with contexts, or refused below tau."""

    status: str
    text: Optional[str]
    contexts: list = field(default_factory=list)
    generator: Optional[str] = None
    latency_ms: float = 0.0

    def __post_init__(self):
        if self.status not in ("answered", "refused"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "refused" and self.text is not None:
            raise ValueError("refused answers carry no text")
        if self.generator is not None and self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.status == "answered" and self.generator != "live_state_template" and not self.contexts:
            raise ValueError("answered (non-live) requires at least one context")
