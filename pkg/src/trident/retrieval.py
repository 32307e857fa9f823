"""Paragraph corpus store, Okapi BM25 inverted index, and embedders.

The analyzer is deliberately dumb: lowercase, split on any non-alphanumeric
character, drop empties. No stemming, no stopwords. That keeps the index
language-agnostic and lets a ten-line brute-force scorer reproduce it exactly.

Scoring is Okapi BM25 with the non-negative IDF form
``ln((N - df + 0.5) / (df + 0.5) + 1)``. Query terms are scored per
occurrence, left to right, so duplicated terms count twice and summation
order is fixed (exact float reproducibility against the test oracle).
"""
from __future__ import annotations

import json
import math
import os
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from trident.errors import (
    DimensionMismatch,
    DuplicatePassageId,
    EmptyCorpus,
    EmptyQuery,
    IndexFormatError,
    RemoteUnavailable,
)

INDEX_FORMAT_VERSION = 1

_TERM_RE = re.compile(r"[0-9a-z]+")


def analyze(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop empty terms."""
    return _TERM_RE.findall(text.lower())


@dataclass(frozen=True)
class Passage:
    id: str
    title: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"passage {self.id!r} has empty text")

    def to_json(self) -> dict:
        return {"id": self.id, "title": self.title, "text": self.text}

    @classmethod
    def from_json(cls, obj: dict) -> "Passage":
        return cls(id=str(obj["id"]), title=str(obj.get("title", "")), text=str(obj["text"]))


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


@dataclass(frozen=True)
class ScoredPassage:
    passage: Passage
    score: float
    rank: int


def read_passages_jsonl(path: str | Path) -> Iterator[Passage]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield Passage.from_json(json.loads(line))


def write_passages_jsonl(path: str | Path, passages: Iterable[Passage]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in passages:
            fh.write(json.dumps(p.to_json(), sort_keys=True) + "\n")


class Bm25Index:
    """Immutable-after-build inverted index over one passage corpus."""

    def __init__(self, passages: Iterable[Passage], params: Bm25Params = Bm25Params()):
        self.params = params
        self.passages: list[Passage] = []
        self._by_id: dict[str, int] = {}
        self.doc_terms: list[list[str]] = []
        for passage in passages:
            if passage.id in self._by_id:
                raise DuplicatePassageId(f"passage id {passage.id!r} appears twice")
            self._by_id[passage.id] = len(self.passages)
            self.passages.append(passage)
            self.doc_terms.append(analyze(passage.text))
        if not self.passages:
            raise EmptyCorpus("cannot build an index over zero passages")

        self.doc_len = [len(t) for t in self.doc_terms]
        self.n_docs = len(self.passages)
        self.avgdl = sum(self.doc_len) / self.n_docs
        # postings: term -> list of (doc_index, term_frequency)
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for doc_idx, terms in enumerate(self.doc_terms):
            for term, tf in sorted(Counter(terms).items()):
                self.postings.setdefault(term, []).append((doc_idx, tf))
        self.df = {term: len(plist) for term, plist in self.postings.items()}

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def get(self, passage_id: str) -> Passage:
        return self.passages[self._by_id[passage_id]]

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._by_id

    def search(self, query: str, k: int) -> list[ScoredPassage]:
        """Top-k passages by BM25; only positive scores, ties by id ascending."""
        if k <= 0:
            raise ValueError(f"k must be positive, got {k}")
        terms = analyze(query)
        if not terms:
            raise EmptyQuery(f"query {query!r} has no indexable terms")
        k1, b = self.params.k1, self.params.b
        scores: dict[int, float] = {}
        for term in terms:  # per occurrence, in query order
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for doc_idx, tf in plist:
                norm = k1 * (1.0 - b + b * self.doc_len[doc_idx] / self.avgdl)
                scores[doc_idx] = scores.get(doc_idx, 0.0) + idf * (tf * (k1 + 1.0)) / (tf + norm)
        hits = [(doc_idx, s) for doc_idx, s in scores.items() if s > 0.0]
        hits.sort(key=lambda item: (-item[1], self.passages[item[0]].id))
        return [
            ScoredPassage(passage=self.passages[doc_idx], score=s, rank=rank)
            for rank, (doc_idx, s) in enumerate(hits[:k], start=1)
        ]

    # --- persistence: a directory with a manifest, postings and passages ---

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format_version": INDEX_FORMAT_VERSION,
            "k1": self.params.k1,
            "b": self.params.b,
            "doc_count": self.n_docs,
            "avgdl": self.avgdl,
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
        write_passages_jsonl(directory / "passages.jsonl", self.passages)
        postings = {term: [[d, tf] for d, tf in plist] for term, plist in self.postings.items()}
        (directory / "postings.json").write_text(
            json.dumps({"postings": postings, "doc_len": self.doc_len}, sort_keys=True),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, directory: str | Path) -> "Bm25Index":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise IndexFormatError(f"{directory} has no manifest.json")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        version = manifest.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise IndexFormatError(
                f"index format {version} unsupported (expected {INDEX_FORMAT_VERSION})"
            )
        params = Bm25Params(k1=manifest["k1"], b=manifest["b"])
        passages = list(read_passages_jsonl(directory / "passages.jsonl"))
        index = cls(passages, params)
        if index.n_docs != manifest["doc_count"]:
            raise IndexFormatError(
                f"manifest says {manifest['doc_count']} passages, store has {index.n_docs}"
            )
        return index


@dataclass
class EmbeddingVector:
    values: np.ndarray
    normalized: bool

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _unit_normalize(values: np.ndarray) -> EmbeddingVector:
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        return EmbeddingVector(values=values, normalized=False)
    return EmbeddingVector(values=values / norm, normalized=True)


def cosine_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """1 - dot(a, b) for unit vectors; in [0, 2]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    return 1.0 - float(np.dot(a.values, b.values))


class TfidfEmbedder:
    """Deterministic TF-IDF embedder over a built index's vocabulary.

    Weight per term: raw tf * (ln((1 + N) / (1 + df)) + 1), L2-normalized.
    Terms outside the index vocabulary are dropped.
    """

    def __init__(self, index: Bm25Index):
        self.terms = sorted(index.postings.keys())
        self._term_to_dim = {t: i for i, t in enumerate(self.terms)}
        n = index.n_docs
        self._idf = np.array(
            [math.log((1 + n) / (1 + index.df[t])) + 1.0 for t in self.terms],
            dtype=np.float64,
        )
        self.identity = f"tfidf-{len(self.terms)}t"

    def embed(self, text: str) -> EmbeddingVector:
        values = np.zeros(len(self.terms), dtype=np.float64)
        for term, tf in Counter(analyze(text)).items():
            dim = self._term_to_dim.get(term)
            if dim is not None:
                values[dim] = tf * self._idf[dim]
        return _unit_normalize(values)


class RemoteEmbedder:
    """Client for the embedding wire protocol: POST /v1/embed."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()
        self.identity = f"remote-embed:{self.endpoint}"

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        import requests

        try:
            resp = self._session.post(
                f"{self.endpoint}/v1/embed", json={"texts": texts}, timeout=self.timeout
            )
            resp.raise_for_status()
            payload = resp.json()
        except (requests.ConnectionError, requests.Timeout, requests.HTTPError) as exc:
            raise RemoteUnavailable(f"embedder at {self.endpoint} unavailable: {exc}") from exc
        vectors = payload.get("vectors")
        if vectors is None or len(vectors) != len(texts):
            raise RemoteUnavailable(f"embedder at {self.endpoint} returned a malformed response")
        return [_unit_normalize(np.asarray(v, dtype=np.float64)) for v in vectors]


def atomic_write_text(path: str | Path, content: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)
