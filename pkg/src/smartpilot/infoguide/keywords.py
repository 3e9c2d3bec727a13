"""Seed keywords and their static synonym expansion."""

from __future__ import annotations

import json
from importlib import resources

from .text import lemmatize
from .types import KeywordSet


def load_keywords(path=None) -> KeywordSet:
    """Load the shipped keyword/synonym table (or a caller-supplied one)."""
    if path is not None:
        with open(path) as fh:
            doc = json.load(fh)
    else:
        doc = json.loads(resources.files("smartpilot.infoguide.data").joinpath("keywords.json").read_text())
    seeds = tuple(doc["seeds"])
    expanded = set(seeds)
    for syns in doc.get("synonyms", {}).values():
        expanded.update(syns)
    return KeywordSet(seeds=seeds, expanded=frozenset(expanded))


def keyword_lemmas(keywords: KeywordSet) -> frozenset:
    return frozenset(lemmatize(k) for k in keywords.expanded)


def keyword_hits(tokens_lemmas, keywords: KeywordSet) -> frozenset:
    """Expanded keywords whose lemma occurs among the given token lemmas."""
    toks = set(tokens_lemmas)
    return frozenset(k for k in keywords.expanded if lemmatize(k) in toks)
