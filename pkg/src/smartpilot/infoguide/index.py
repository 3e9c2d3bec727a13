"""Retrieval index: keyword-selected chunks, summarized and re-embedded.

What gets embedded for query-time retrieval is the summarized context
document of each selected chunk (not the raw chunk text); chunk ids key the
summaries back to their sources. The index is immutable once built; rebuilds
swap whole snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .retrieval import select_relevant_chunks
from .summarize import summarize
from .text import embed_text
from .types import Chunk, InfoConfig, KeywordSet


@dataclass(frozen=True)
class Index:
    entries: tuple  # summarized Chunks, embedding over the summary text
    originals: dict  # chunk_id -> source Chunk

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, chunk_id: str):
        return self.originals.get(chunk_id)

    def entry(self, chunk_id: str):
        for e in self.entries:
            if e.chunk_id == chunk_id:
                return e
        return None


def build_index(chunks, keywords: KeywordSet, client=None, cfg: InfoConfig = InfoConfig()) -> Index:
    """Filter chunks by keyword relevance, summarize each, embed summaries."""
    selected = select_relevant_chunks(chunks, keywords, cfg.select_threshold)
    entries = []
    for ch in selected:
        summary = summarize([ch], keywords, client=client, top_n=cfg.summary_sentences)
        entries.append(
            Chunk(
                chunk_id=ch.chunk_id,
                text=summary.text,
                source_doc=ch.source_doc,
                keywords_hit=ch.keywords_hit,
                embedding=embed_text(summary.text, cfg.embed_dim),
            )
        )
    return Index(entries=tuple(entries), originals={c.chunk_id: c for c in chunks})
