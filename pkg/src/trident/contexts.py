"""Selection of the (relevant, irrelevant) context pair for a question.

Relevant context is the gold passage when available, else the rank-1
retrieval. Irrelevant context comes from one of four strategies:

* ``random``        - uniform draw from a candidate pool, excluding the
                      relevant passage, seeded;
* ``fixed``         - a hand-written passage of pure filler, shipped as an
                      asset, identical for every query;
* ``fixed_permuted``- the same filler passage with its word order shuffled
                      under the run seed;
* ``most_distant``  - the pool passage whose embedding is farthest (cosine
                      distance) from the relevant passage's embedding.

``fixed`` and ``fixed_permuted`` never touch the corpus, index or embedder.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources

from trident.errors import EmbedderUnavailable, EmptyPool, NoRetrievalHit, RemoteUnavailable
from trident.retrieval import Bm25Index, Passage, cosine_distance

IRRELEVANT_STRATEGIES = ("random", "fixed", "fixed_permuted", "most_distant")

FIXED_PASSAGE_ID = "fixed-irrelevant"
DEFAULT_POOL_SIZE = 100


def _load_fixed_text() -> str:
    ref = resources.files("trident").joinpath("assets/fixed_irrelevant.txt")
    return ref.read_text(encoding="utf-8").strip()


FIXED_IRRELEVANT_TEXT = _load_fixed_text()


@dataclass(frozen=True)
class ContextPair:
    relevant: Passage
    irrelevant: Passage
    strategy: str  # random | fixed | fixed_permuted | most_distant, or gold_relevant provenance
    seed: int | None = None


def permute_words(text: str, seed: int) -> str:
    """Shuffle whitespace-separated words; the character multiset survives."""
    words = text.split()
    rng = random.Random(seed)
    rng.shuffle(words)
    return " ".join(words)


def fixed_passage() -> Passage:
    return Passage(id=FIXED_PASSAGE_ID, title="", text=FIXED_IRRELEVANT_TEXT)


def fixed_permuted_passage(seed: int) -> Passage:
    return Passage(
        id=f"{FIXED_PASSAGE_ID}-permuted-{seed}",
        title="",
        text=permute_words(FIXED_IRRELEVANT_TEXT, seed),
    )


def select_relevant(question: str, index: Bm25Index | None, gold: Passage | None = None) -> Passage:
    """Gold passage when provided, else the rank-1 retrieval."""
    if gold is not None:
        return gold
    if index is None:
        raise NoRetrievalHit(f"no index and no gold context for question {question!r}")
    hits = index.search(question, k=1)
    if not hits:
        raise NoRetrievalHit(f"retrieval returned nothing for question {question!r}")
    return hits[0].passage


def candidate_pool(
    question: str, index: Bm25Index, pool_size: int = DEFAULT_POOL_SIZE
) -> list[Passage]:
    """Top retrievals for the question, excluding the rank-1 passage."""
    hits = index.search(question, k=pool_size)
    return [h.passage for h in hits[1:]]


def select_irrelevant(
    strategy: str,
    c_plus: Passage,
    pool: list[Passage] | None = None,
    embedder=None,
    seed: int | None = None,
) -> Passage:
    if strategy == "fixed":
        return fixed_passage()
    if strategy == "fixed_permuted":
        return fixed_permuted_passage(0 if seed is None else seed)

    candidates = [p for p in (pool or []) if p.id != c_plus.id]
    if not candidates:
        raise EmptyPool(f"no candidate passages for strategy {strategy!r}")

    if strategy == "random":
        rng = random.Random(seed)
        return candidates[rng.randrange(len(candidates))]

    if strategy == "most_distant":
        if embedder is None:
            raise EmbedderUnavailable("most_distant selection needs an embedder")
        try:
            anchor = embedder.embed(c_plus.text)
            best = None
            best_distance = -1.0
            for passage in sorted(candidates, key=lambda p: p.id):
                distance = cosine_distance(embedder.embed(passage.text), anchor)
                if distance > best_distance:
                    best, best_distance = passage, distance
            return best
        except RemoteUnavailable as exc:
            raise EmbedderUnavailable(str(exc)) from exc

    raise ValueError(f"unknown irrelevant-context strategy {strategy!r}")


def derive_seed(base_seed: int, ordinal: int) -> int:
    """Per-question seed: base xor ordinal, parallel-safe and reproducible."""
    return base_seed ^ ordinal
