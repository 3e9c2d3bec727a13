"""Manual ingestion: noise cleaning and paragraph chunking.

Pages are separated by form feeds. Cleaning removes standalone page numbers,
header/footer lines repeating on three or more pages, and lines made purely
of decorative symbols. Paragraphs (blank-line separated) become chunks; a
paragraph longer than max_chars splits into overlapping windows, and chunks
never span paragraph boundaries.
"""

from __future__ import annotations

import re
from collections import Counter

from .keywords import keyword_hits
from .text import embed_text, lemma_tokens
from .types import Chunk, ChunkConfig, IngestionError, KeywordSet

_PAGE_NUMBER_RE = re.compile(r"^(page\s+)?\d+(\s*(of|/)\s*\d+)?$", re.IGNORECASE)
_MIN_HEADER_PAGES = 3


def _is_page_number(line: str) -> bool:
    return bool(_PAGE_NUMBER_RE.match(line.strip()))


def _is_symbol_run(line: str) -> bool:
    s = line.strip()
    return bool(s) and not re.search(r"[a-zA-Z0-9]", s)


def _repeated_edge_lines(pages) -> set:
    """Header/footer texts seen at a page edge on >= 3 distinct pages."""
    seen: Counter = Counter()
    for page in pages:
        lines = [l for l in page.splitlines() if l.strip()]
        if not lines:
            continue
        edges = {lines[0].strip()} | ({lines[-1].strip()} if len(lines) > 1 else set())
        for e in edges:
            seen[e] += 1
    return {text for text, n in seen.items() if n >= _MIN_HEADER_PAGES}


def clean_manual(doc: str) -> str:
    """Strip noise; returns the cleaned text with page breaks collapsed."""
    pages = doc.split("\f")
    noise = _repeated_edge_lines(pages)
    kept = []
    for page in pages:
        for line in page.splitlines():
            s = line.strip()
            if not s:
                kept.append("")
                continue
            if _is_page_number(s) or _is_symbol_run(s) or s in noise:
                continue
            kept.append(line.rstrip())
        kept.append("")  # page boundary acts as a paragraph break
    return "\n".join(kept)


def split_paragraphs(text: str) -> list:
    paras = re.split(r"\n\s*\n", text)
    return [" ".join(p.split()) for p in paras if p.strip()]


def chunk_paragraphs(paragraphs, cfg: ChunkConfig) -> list:
    """Window each oversized paragraph; short paragraphs pass through."""
    pieces = []
    for para in paragraphs:
        if len(para) <= cfg.max_chars:
            pieces.append(para)
            continue
        step = cfg.max_chars - cfg.overlap
        start = 0
        while start < len(para):
            piece = para[start : start + cfg.max_chars]
            pieces.append(piece)
            if start + cfg.max_chars >= len(para):
                break
            start += step
    return pieces


def ingest_manual(
    doc: str,
    keywords: KeywordSet,
    chunk_cfg: ChunkConfig = ChunkConfig(),
    source_doc: str = "doc",
    embed_dim: int = 256,
) -> list:
    """Clean, split, and embed one manual into Chunk objects."""
    if not doc or not doc.strip():
        raise IngestionError(f"empty document {source_doc!r}")
    cleaned = clean_manual(doc)
    paragraphs = split_paragraphs(cleaned)
    pieces = chunk_paragraphs(paragraphs, chunk_cfg)
    if not pieces:
        raise IngestionError(f"document {source_doc!r} is empty after cleaning")
    chunks = []
    for i, text in enumerate(pieces):
        chunks.append(
            Chunk(
                chunk_id=f"{source_doc}:{i:03d}",
                text=text,
                source_doc=source_doc,
                keywords_hit=keyword_hits(lemma_tokens(text), keywords),
                embedding=embed_text(text, embed_dim),
            )
        )
    return chunks
