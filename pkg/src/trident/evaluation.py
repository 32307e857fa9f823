"""Dataset ingestion, exact-match scoring, popularity bucketing and reports.

Answer normalization follows the long-standing open-domain QA convention:
lowercase, strip punctuation, drop the articles a/an/the, collapse
whitespace. A prediction is the detokenized generation truncated at the
first newline, trimmed.
"""
from __future__ import annotations

import json
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from trident.backends.base import LMBackend
from trident.contexts import (
    candidate_pool,
    derive_seed,
    select_irrelevant,
    select_relevant,
)
from trident.decoding import (
    BranchPrompts,
    DecodeLimits,
    DecodeStrategy,
    decode,
    write_trace,
)
from trident.errors import TridentError
from trident.prompting import FewShotExample, PromptTemplate, render
from trident.retrieval import Bm25Index, Passage, atomic_write_text

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")

POPULARITY_BUCKET_MAX = 6
UNKNOWN_BUCKET = "unknown"


def normalize_answer(s: str) -> str:
    """Lowercase, remove punctuation and articles, collapse whitespace."""
    s = s.lower()
    s = s.translate(_PUNCT_TABLE)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def exact_match(prediction: str, answers: Sequence[str]) -> bool:
    if not answers:
        raise ValueError("answers must be non-empty")
    norm_pred = normalize_answer(prediction)
    return any(norm_pred == normalize_answer(a) for a in answers)


def popularity_bucket(views: int) -> str:
    """Bucket label for monthly page views: floor(log10(views+1)), clamped."""
    if views < 0:
        raise ValueError(f"views must be non-negative, got {views}")
    k = min(POPULARITY_BUCKET_MAX, len(str(views + 1)) - 1)
    return f"10^{k}–10^{k + 1}"


@dataclass(frozen=True)
class QaRecord:
    id: str
    question: str
    answers: tuple[str, ...]
    gold_context: str | None = None
    entity_popularity: int | None = None
    answer_entity_span: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.answers:
            raise ValueError(f"record {self.id!r} has no answers")
        if self.entity_popularity is not None and self.entity_popularity < 0:
            raise ValueError(f"record {self.id!r} has negative popularity")
        if self.answer_entity_span is not None:
            if self.gold_context is None:
                raise ValueError(f"record {self.id!r} has a span but no gold context")
            start, end = self.answer_entity_span
            if not 0 <= start < end <= len(self.gold_context):
                raise ValueError(f"record {self.id!r} span {self.answer_entity_span} out of bounds")
            surface = self.gold_context[start:end]
            if normalize_answer(surface) not in {normalize_answer(a) for a in self.answers}:
                raise ValueError(
                    f"record {self.id!r} spanned text {surface!r} matches none of its answers"
                )

    @property
    def entity_surface(self) -> str | None:
        if self.answer_entity_span is None:
            return None
        start, end = self.answer_entity_span
        return self.gold_context[start:end]

    def to_json(self) -> dict:
        obj: dict = {"id": self.id, "question": self.question, "answers": list(self.answers)}
        if self.gold_context is not None:
            obj["gold_context"] = self.gold_context
        if self.entity_popularity is not None:
            obj["entity_popularity"] = self.entity_popularity
        if self.answer_entity_span is not None:
            obj["answer_entity_span"] = list(self.answer_entity_span)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "QaRecord":
        span = obj.get("answer_entity_span")
        return cls(
            id=str(obj["id"]),
            question=str(obj["question"]),
            answers=tuple(str(a) for a in obj["answers"]),
            gold_context=obj.get("gold_context"),
            entity_popularity=obj.get("entity_popularity"),
            answer_entity_span=tuple(span) if span is not None else None,
        )


def read_qa_jsonl(path: str | Path) -> Iterator[QaRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield QaRecord.from_json(json.loads(line))


def write_qa_jsonl(path: str | Path, records: Iterable[QaRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


@dataclass
class EvalSettings:
    """Everything run_eval needs beyond the dataset and strategies."""

    irrelevant: str = "most_distant"
    use_gold: bool = True
    pool_size: int = 100
    shots: tuple[FewShotExample, ...] = ()
    templates: dict[str, PromptTemplate] | None = None
    seed: int = 0
    limits: DecodeLimits = field(default_factory=DecodeLimits)
    workers: int = 1
    trace_dir: Path | None = None


@dataclass
class RunReport:
    strategy: dict
    em: float | None
    per_bucket_em: dict[str, tuple[float, int]]
    items: list[dict]
    counts: dict
    config: dict
    flags: list[str]

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "em": self.em,
            "per_bucket_em": {
                label: {"em": em, "count": count}
                for label, (em, count) in sorted(self.per_bucket_em.items())
            },
            "items": self.items,
            "counts": self.counts,
            "config": self.config,
            "flags": self.flags,
        }

    def write(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, obj: dict) -> "RunReport":
        return cls(
            strategy=obj["strategy"],
            em=obj["em"],
            per_bucket_em={
                label: (entry["em"], entry["count"])
                for label, entry in obj["per_bucket_em"].items()
            },
            items=obj["items"],
            counts=obj["counts"],
            config=obj.get("config", {}),
            flags=obj.get("flags", []),
        )

    @classmethod
    def read(cls, path: str | Path) -> "RunReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def extract_prediction(text: str) -> str:
    return text.split("\n", 1)[0].strip()


class _ItemOutcome:
    def __init__(self, record: QaRecord, ordinal: int):
        self.record = record
        self.ordinal = ordinal
        self.by_strategy: dict[str, dict] = {}


def _eval_one_item(
    record: QaRecord,
    ordinal: int,
    strategies: Sequence[DecodeStrategy],
    backend: LMBackend,
    index: Bm25Index | None,
    embedder,
    settings: EvalSettings,
) -> _ItemOutcome:
    outcome = _ItemOutcome(record, ordinal)
    seed = derive_seed(settings.seed, ordinal)

    union_branches = frozenset().union(*(s.required_branches for s in strategies))
    context_error: str | None = None
    c_plus: Passage | None = None
    c_minus: Passage | None = None
    if "relevant" in union_branches or "irrelevant" in union_branches:
        try:
            gold = None
            if settings.use_gold and record.gold_context is not None:
                gold = Passage(id=f"gold:{record.id}", title="", text=record.gold_context)
            c_plus = select_relevant(record.question, index, gold)
            if "irrelevant" in union_branches:
                pool = None
                if settings.irrelevant in ("random", "most_distant"):
                    if index is None:
                        raise TridentError(
                            f"irrelevant strategy {settings.irrelevant!r} needs an index"
                        )
                    pool = candidate_pool(record.question, index, settings.pool_size)
                c_minus = select_irrelevant(
                    settings.irrelevant, c_plus, pool=pool, embedder=embedder, seed=seed
                )
        except TridentError as exc:
            context_error = f"{type(exc).__name__}: {exc}"

    closed_prompt = None
    open_prompt_relevant = None
    open_prompt_irrelevant = None

    for strategy in strategies:
        entry = {
            "id": record.id,
            "prediction": None,
            "matched_answer": None,
            "match": False,
            "error": None,
            "traces_path": None,
        }
        try:
            needed = strategy.required_branches
            if ("relevant" in needed or "irrelevant" in needed) and context_error is not None:
                raise TridentError(context_error)

            prompts = BranchPrompts()
            if "parametric" in needed:
                if closed_prompt is None:
                    closed_prompt = render(
                        "closed", record.question, shots=settings.shots,
                        templates=settings.templates,
                    )
                prompts.parametric = backend.tokenize(closed_prompt)
            if "relevant" in needed:
                if open_prompt_relevant is None:
                    open_prompt_relevant = render(
                        "open", record.question, context=c_plus.text,
                        shots=settings.shots, templates=settings.templates,
                    )
                prompts.relevant = backend.tokenize(open_prompt_relevant)
            if "irrelevant" in needed:
                if open_prompt_irrelevant is None:
                    open_prompt_irrelevant = render(
                        "open", record.question, context=c_minus.text,
                        shots=settings.shots, templates=settings.templates,
                    )
                prompts.irrelevant = backend.tokenize(open_prompt_irrelevant)

            result = decode(strategy, prompts, backend, settings.limits)
            prediction = extract_prediction(result.text)
            entry["prediction"] = prediction
            norm_pred = normalize_answer(prediction)
            for answer in record.answers:
                if norm_pred == normalize_answer(answer):
                    entry["matched_answer"] = answer
                    entry["match"] = True
                    break

            if settings.trace_dir is not None:
                settings.trace_dir.mkdir(parents=True, exist_ok=True)
                trace_path = settings.trace_dir / (
                    f"{_sanitize(record.id)}-{strategy.name}.jsonl"
                )
                with open(trace_path, "w", encoding="utf-8") as fh:
                    write_trace(fh, strategy, backend, prompts, result.traces)
                entry["traces_path"] = str(trace_path)
        except TridentError as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
        outcome.by_strategy[strategy.name] = entry
    return outcome


def run_eval(
    records: Iterable[QaRecord],
    strategies: Sequence[DecodeStrategy],
    backend: LMBackend,
    index: Bm25Index | None = None,
    embedder=None,
    settings: EvalSettings | None = None,
    config: dict | None = None,
) -> list[RunReport]:
    """Evaluate every strategy over the dataset; one report per strategy.

    Items are decoded independently (optionally by a worker pool); reports
    are assembled in dataset order. Errored items count as non-matches.
    """
    settings = settings or EvalSettings()
    records = list(records)
    config = dict(config or {})
    if embedder is None and index is not None and settings.irrelevant == "most_distant":
        from trident.retrieval import TfidfEmbedder

        embedder = TfidfEmbedder(index)

    if records:
        if settings.workers > 1:
            with ThreadPoolExecutor(max_workers=settings.workers) as pool:
                outcomes = list(
                    pool.map(
                        lambda pair: _eval_one_item(
                            pair[1], pair[0], strategies, backend, index, embedder, settings
                        ),
                        enumerate(records),
                    )
                )
        else:
            outcomes = [
                _eval_one_item(record, i, strategies, backend, index, embedder, settings)
                for i, record in enumerate(records)
            ]
    else:
        outcomes = []

    reports = []
    for strategy in strategies:
        items = [o.by_strategy[strategy.name] for o in outcomes]
        errored = sum(1 for item in items if item["error"] is not None)
        flags = []
        if not items:
            em = None
            flags.append("no items")
            per_bucket: dict[str, tuple[float, int]] = {}
        else:
            matches = [1.0 if item["match"] else 0.0 for item in items]
            em = sum(matches) / len(matches)
            bucket_hits: dict[str, list[float]] = {}
            for record, m in zip(records, matches):
                label = (
                    popularity_bucket(record.entity_popularity)
                    if record.entity_popularity is not None
                    else UNKNOWN_BUCKET
                )
                bucket_hits.setdefault(label, []).append(m)
            per_bucket = {
                label: (sum(hits) / len(hits), len(hits))
                for label, hits in bucket_hits.items()
            }
        reports.append(
            RunReport(
                strategy=strategy.describe(),
                em=em,
                per_bucket_em=per_bucket,
                items=items,
                counts={"total": len(items), "errored": errored},
                config=config,
                flags=flags,
            )
        )
    return reports
