"""Tokenization, suffix lemmatization, and the hashed-TF embedding.

The embedding is a deterministic stand-in for a pretrained sentence encoder:
lemmatized tokens hash into a fixed number of buckets (blake2b, stable across
processes), counts are L2-normalized, so cosine similarity is a dot product.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_SUFFIXES = ("ing", "ed", "es", "s")
_MIN_STEM = 3


def tokenize(text: str) -> list:
    return _TOKEN_RE.findall(text.lower())


def lemmatize(token: str) -> str:
    """Strip s/es/ed/ing suffixes to a fixpoint (crude, but applied to both
    sides of every comparison, so matching stays consistent)."""
    while True:
        for suf in _SUFFIXES:
            if token.endswith(suf) and len(token) - len(suf) >= _MIN_STEM:
                token = token[: -len(suf)]
                break
        else:
            return token


def lemma_tokens(text: str) -> list:
    return [lemmatize(t) for t in tokenize(text)]


def lemma_set(text: str) -> frozenset:
    return frozenset(lemma_tokens(text))


def bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def embed_text(text: str, dim: int = 256) -> np.ndarray:
    """L2-normalized hashed term-frequency vector; zero vector for no tokens."""
    v = np.zeros(dim)
    for tok in lemma_tokens(text):
        v[bucket(tok, dim)] += 1.0
    norm = float(np.linalg.norm(v))
    return v / norm if norm > 0 else v


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Inputs are unit or zero vectors, so this is a plain dot product."""
    return float(np.dot(a, b))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 0.0
    union = a | b
    return len(a & b) / len(union)


_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list:
    return [s for s in (_s.strip() for _s in _SENTENCE_RE.split(text)) if s]
