"""Hybrid retrieval: hashed-TF cosine blended with keyword-token Jaccard."""

from __future__ import annotations

from .text import cosine, embed_text, jaccard, lemma_set
from .types import Chunk, KeywordSet, RetrievalResult


def select_relevant_chunks(chunks, keywords: KeywordSet, threshold: float) -> list:
    """Chunks whose best cosine against any expanded keyword reaches the
    threshold, ordered by that score descending then chunk_id."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    scored = []
    for ch in chunks:
        dim = ch.embedding.shape[0]
        best = max(cosine(embed_text(kw, dim), ch.embedding) for kw in keywords.expanded)
        if best >= threshold:
            scored.append((-best, ch.chunk_id, ch))
    scored.sort(key=lambda item: (item[0], item[1]))
    return [ch for _, _, ch in scored]


def retrieve(query: str, index, k: int, alpha: float) -> list:
    """Top-k entries by alpha * cosine + (1 - alpha) * jaccard; ties break on
    chunk_id. Pure function; empty index gives an empty list."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    entries = list(index)
    if not entries:
        return []
    dim = entries[0].embedding.shape[0]
    q_emb = embed_text(query, dim)
    q_set = lemma_set(query)
    results = []
    for ch in entries:
        neural = cosine(q_emb, ch.embedding)
        symbolic = jaccard(q_set, lemma_set(ch.text))
        combined = alpha * neural + (1.0 - alpha) * symbolic
        results.append(RetrievalResult(ch.chunk_id, neural, symbolic, combined))
    results.sort(key=lambda r: (-r.combined, r.chunk_id))
    return results[:k]
