"""Synthetic manual corpus with gold question-to-chunk labels.

Each gold paragraph carries a two-token entity that appears nowhere else in
the corpus, so its question is answerable from exactly one chunk. Out-of-domain
questions are built from a vocabulary checked disjoint from the corpus at the
content-lemma level. All structural guarantees are asserted at generation time
against the real ingestion pipeline, so drift fails loudly.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import json

import numpy as np

from smartpilot.infoguide import (
    InfoConfig,
    KeywordSet,
    build_index,
    ingest_manual,
    lemma_set,
    lemmatize,
    load_keywords,
    retrieve,
)

# Function words excluded when checking vocabulary disjointness; stored as
# lemmas so membership tests line up with lemma_set output.
STOPWORD_LEMMAS = frozenset(lemmatize(w) for w in """
the a an is are was were be been being of to in for on and or with at by from
as it its this that these those how what when where which why who whom do
does did must can could should would will may might every each per all one
some any than then so such but if during before after into over under while
not no nor only also very many much often long far more most least them they
their there here our your my his her
""".split())


def content_lemmas(text: str) -> frozenset:
    return frozenset(lemma_set(text)) - STOPWORD_LEMMAS


@dataclass
class CorpusGenConfig:
    seed: int = 11


@dataclass(frozen=True)
class GoldQuestion:
    question: str
    chunk_id: str
    manual: str
    entity: str


@dataclass
class CorpusBundle:
    manuals: "OrderedDict[str, str]"
    gold: Tuple[GoldQuestion, ...]
    ood_questions: Tuple[str, ...]
    keywords: KeywordSet
    n_paragraphs: int


def _maintenance(e, v):
    para = (f"Maintenance of the {e} is scheduled every {v} days. "
            f"During maintenance, wipe the {e} and check for wear. "
            f"Log the maintenance result after each service.")
    return para, f"How often is maintenance of the {e} scheduled?"


def _safety(e, _v):
    para = (f"Safety rule: the {e} must be engaged before the line starts. "
            f"Test the {e} during the safety drill at shift start. "
            f"Safety issues stop the line at once.")
    return para, f"When must the {e} be engaged for safety?"


def _inspection(e, v):
    para = (f"Inspection of the {e} takes place every {v} shifts. "
            f"During inspection, measure the {e} clearance with a gauge. "
            f"Inspection findings go to the station log.")
    return para, f"How often does inspection of the {e} take place?"


def _operation(e, v):
    para = (f"Normal operation of the {e} needs a warmup of {v} minutes. "
            f"During operation, keep the {e} clear of debris. "
            f"Pause operation when an alarm sounds.")
    return para, f"How many minutes of warmup does the {e} need?"


def _warning(e, _v):
    para = (f"Warning: replace the {e} only while power is isolated. "
            f"Ignoring this warning can destroy the {e}. "
            f"A warning label sits next to the access panel.")
    return para, f"When is it safe to replace the {e}?"


def _installation(e, v):
    para = (f"Installation of the {e} requires a fastening force of {v} Nm. "
            f"After installation, verify the {e} sits flush with the frame. "
            f"Only trained fitters perform the installation.")
    return para, f"What fastening force does installation of the {e} require?"


def _danger(e, _v):
    para = (f"Danger: the {e} can close without notice during a fault. "
            f"Keep hands away from the {e} to avoid this danger. "
            f"Danger signs mark the area.")
    return para, f"What danger does the {e} pose?"


def _caution(e, _v):
    para = (f"Caution: move the {e} only with the lift trolley. "
            f"Use caution when the {e} swings free. "
            f"A caution notice hangs on the frame.")
    return para, f"What caution applies to the {e}?"


_VALUE_POOLS = {
    _maintenance: (30, 45, 60, 90),
    _inspection: (5, 10, 20),
    _operation: (3, 5, 10, 15),
    _installation: (18, 25, 35, 40),
}

# (manual, template, entity) in document order; entities are corpus-unique.
_GOLD_SPEC = (
    ("robot_arm", _maintenance, "vacuum gripper"),
    ("robot_arm", _safety, "restraint latch"),
    ("robot_arm", _inspection, "wrist encoder"),
    ("robot_arm", _operation, "teach pendant"),
    ("robot_arm", _warning, "servo fuse"),
    ("conveyor", _maintenance, "chain sprocket"),
    ("conveyor", _installation, "belt tensioner"),
    ("conveyor", _inspection, "roller bearing"),
    ("conveyor", _caution, "pinch shield"),
    ("conveyor", _operation, "speed dial"),
    ("sensors", _inspection, "torque probe"),
    ("sensors", _installation, "proximity switch"),
    ("sensors", _maintenance, "lens wiper"),
    ("sensors", _warning, "infrared imager"),
    ("sensors", _safety, "light curtain"),
    ("stands", _installation, "anchor stud"),
    ("stands", _inspection, "stabilizer foot"),
    ("stands", _danger, "hydraulic clamp"),
    ("stands", _caution, "counterweight sled"),
    ("stands", _safety, "guard rail"),
)

_PADDING = {
    "robot_arm": (
        "General safety: keep clear of the moving envelope while the cell is "
        "active. The safety system stops motion when a door opens. Review "
        "safety notes before each shift.",
        "Routine maintenance keeps the cell reliable. Follow the maintenance "
        "plan posted at the station. Skipping maintenance voids the warranty.",
        "Operation notes: ramp the cell gently after a cold start. Smooth "
        "operation extends component life.",
    ),
    "conveyor": (
        "Inspection routine: walk the full length weekly and listen for "
        "grinding. Inspection catches faults early.",
        "Caution: loose clothing can get caught. Keep caution tape visible "
        "along the walkway.",
        "Maintenance tip: dust the frame during every maintenance stop.",
    ),
    "sensors": (
        "Installation note: route cables away from power feeds. A tidy "
        "installation reduces interference.",
        "Warning: never open a sealed housing. The warning applies to all "
        "field units.",
        "Calibration drift is normal; inspection intervals account for it.",
    ),
    "stands": (
        "Safety first: never stack fixtures above shoulder height, for "
        "safety and for stability.",
        "Operation of height adjusters follows the posted chart. Ask a "
        "fitter when in doubt about operation.",
        "Maintenance crews tighten all fasteners quarterly as part of "
        "planned maintenance.",
    ),
}

# Kept deliberately wordy: short queries concentrate weight on shared
# function words and can sneak past the refusal threshold.
OOD_QUESTIONS = (
    "What temperature does a souffle bake at in a convection oven?",
    "On winter solstice nights, does one constellation shine brighter than "
    "all others?",
    "How many strings does a concert violin have?",
    "What pigment gives tomato sauce its deep red color?",
    "When should basil be planted for a summer harvest?",
    "How do composers structure a moonlight sonata performance for piano "
    "recitals?",
    "How hot should maple syrup boil before pouring it into pancake molds?",
    "How far is the crab nebula from our galaxy?",
    "What flour blend makes sourdough rise overnight?",
    "Do rocky tide pools near remote beaches host rare purple starfish "
    "colonies?",
)


def gen_corpus(cfg: CorpusGenConfig) -> CorpusBundle:
    """Manuals, gold (question, chunk_id) pairs, and out-of-domain questions."""
    rng = np.random.default_rng(cfg.seed)
    keywords = load_keywords()

    per_manual: "OrderedDict[str, List[str]]" = OrderedDict()
    gold_raw = []  # (manual, paragraph, question, entity)
    for manual, template, entity in _GOLD_SPEC:
        pool = _VALUE_POOLS.get(template)
        value = int(rng.choice(pool)) if pool else 0
        para, question = template(entity, value)
        per_manual.setdefault(manual, []).append(para)
        gold_raw.append((manual, para, question, entity))
    for manual, pads in _PADDING.items():
        per_manual.setdefault(manual, []).extend(pads)

    manuals = OrderedDict((name, "\n\n".join(paras)) for name, paras in per_manual.items())
    n_paragraphs = sum(len(p) for p in per_manual.values())
    if n_paragraphs < 30 or len(manuals) < 3:
        raise AssertionError("corpus floor: need >= 30 paragraphs across >= 3 manuals")

    # Entity tokens must be unique at the lemma level across all paragraphs.
    all_paras = [p for paras in per_manual.values() for p in paras]
    for _, para, _, entity in gold_raw:
        for lemma in lemma_set(entity):
            holders = [p for p in all_paras if lemma in lemma_set(p)]
            if holders != [para]:
                raise AssertionError(f"entity lemma {lemma!r} is not unique to its paragraph")

    # Resolve chunk ids and validate retrievability through the production
    # pipeline: ingest, index, retrieve.
    info_cfg = InfoConfig()
    all_chunks = []
    for name, text in manuals.items():
        all_chunks.extend(ingest_manual(text, keywords, source_doc=name))
    index = build_index(all_chunks, keywords, cfg=info_cfg)
    indexed_ids = {e.chunk_id for e in index.entries}

    gold: List[GoldQuestion] = []
    for manual, para, question, entity in gold_raw:
        entity_lemmas = lemma_set(entity)
        hits = [c for c in all_chunks if entity_lemmas <= lemma_set(c.text)]
        if len(hits) != 1:
            raise AssertionError(f"entity {entity!r} matched {len(hits)} chunks, want exactly 1")
        chunk = hits[0]
        if chunk.chunk_id not in indexed_ids:
            raise AssertionError(f"gold chunk for {entity!r} fails keyword selection")
        if not entity_lemmas <= lemma_set(index.entry(chunk.chunk_id).text):
            raise AssertionError(f"entity {entity!r} dropped from the chunk summary")
        if not content_lemmas(question) & content_lemmas(chunk.text):
            raise AssertionError(f"question for {entity!r} shares no content token with its chunk")
        ranked = retrieve(question, index.entries, info_cfg.k, info_cfg.alpha)
        if chunk.chunk_id not in [r.chunk_id for r in ranked]:
            raise AssertionError(f"gold question for {entity!r} misses its chunk in top {info_cfg.k}")
        gold.append(GoldQuestion(question=question, chunk_id=chunk.chunk_id,
                                 manual=manual, entity=entity))

    corpus_vocab = content_lemmas(" ".join(all_paras))
    for q in OOD_QUESTIONS:
        overlap = content_lemmas(q) & corpus_vocab
        if overlap:
            raise AssertionError(f"out-of-domain question leaks corpus vocabulary: {sorted(overlap)}")
        ranked = retrieve(q, index.entries, 1, info_cfg.alpha)
        if ranked and ranked[0].combined >= info_cfg.tau:
            raise AssertionError(f"out-of-domain question clears the refusal threshold: {q!r}")

    return CorpusBundle(
        manuals=manuals,
        gold=tuple(gold),
        ood_questions=OOD_QUESTIONS,
        keywords=keywords,
        n_paragraphs=n_paragraphs,
    )


def save_corpus(bundle: CorpusBundle, out_dir) -> Dict[str, str]:
    """Write manuals plus gold/ood question files; returns written paths."""
    out = Path(out_dir)
    manuals_dir = out / "manuals"
    manuals_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, text in bundle.manuals.items():
        path = manuals_dir / f"{name}.txt"
        path.write_text(text)
        written[name] = str(path)
    gold_path = out / "gold.json"
    gold_path.write_text(json.dumps(
        [{"question": g.question, "chunk_id": g.chunk_id, "manual": g.manual,
          "entity": g.entity} for g in bundle.gold], indent=2))
    ood_path = out / "ood.json"
    ood_path.write_text(json.dumps(list(bundle.ood_questions), indent=2))
    written["gold"] = str(gold_path)
    written["ood"] = str(ood_path)
    return written
