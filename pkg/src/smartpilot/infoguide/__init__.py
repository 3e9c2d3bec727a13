"""Domain Q&A agent: ingest, hybrid retrieval, refusal, summarization."""

from .answer import Answer, answer, match_live_intent
from .index import Index, build_index
from .ingest import chunk_paragraphs, clean_manual, ingest_manual, split_paragraphs
from .keywords import keyword_hits, keyword_lemmas, load_keywords
from .retrieval import retrieve, select_relevant_chunks
from .summarize import HttpGeneratorClient, Summary, extractive_summary, summarize
from .text import cosine, embed_text, jaccard, lemma_set, lemma_tokens, lemmatize, tokenize
from .types import (
    Chunk,
    ChunkConfig,
    InfoConfig,
    IngestionError,
    KeywordSet,
    RetrievalResult,
)

__all__ = [
    "Answer",
    "Chunk",
    "ChunkConfig",
    "HttpGeneratorClient",
    "Index",
    "InfoConfig",
    "IngestionError",
    "KeywordSet",
    "RetrievalResult",
    "Summary",
    "answer",
    "build_index",
    "chunk_paragraphs",
    "clean_manual",
    "cosine",
    "embed_text",
    "extractive_summary",
    "ingest_manual",
    "jaccard",
    "keyword_hits",
    "keyword_lemmas",
    "lemma_set",
    "lemma_tokens",
    "lemmatize",
    "load_keywords",
    "match_live_intent",
    "retrieve",
    "select_relevant_chunks",
    "split_paragraphs",
    "summarize",
    "tokenize",
]
