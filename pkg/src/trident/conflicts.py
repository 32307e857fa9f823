"""Knowledge-conflict set construction by answer-entity substitution.

For every record carrying a gold context and an annotated answer span, the
spanned entity is swapped for a different entity drawn from a pool, producing
a context that contradicts whatever the model memorized. A faithful
context reader should answer with the substitute.

Replacement is exact-surface, case-sensitive, and hits every occurrence.
Records are skipped (with a reason) when they lack annotations, when no
valid substitute exists, or when the drawn substitute already occurs in the
context (which would break byte-exact round-trip restoration).
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from trident.errors import PoolTooSmall
from trident.evaluation import QaRecord, normalize_answer

SKIP_NO_ANNOTATION = "missing_span_or_context"
SKIP_POOL_TOO_SMALL = "pool_too_small"
SKIP_SUBSTITUTE_PREEXISTS = "substitute_preexists"


@dataclass(frozen=True)
class SubstitutionRecord:
    base: QaRecord
    substitute_entity: str
    new_context: str
    new_answers: tuple[str, ...]
    new_span: tuple[int, int]

    def to_qa_record(self) -> QaRecord:
        return QaRecord(
            id=self.base.id,
            question=self.base.question,
            answers=self.new_answers,
            gold_context=self.new_context,
            entity_popularity=self.base.entity_popularity,
            answer_entity_span=self.new_span,
        )

    def to_json(self) -> dict:
        obj = self.to_qa_record().to_json()
        obj["substitute_entity"] = self.substitute_entity
        obj["original_answers"] = list(self.base.answers)
        obj["original_surface"] = self.base.entity_surface
        return obj


def default_entity_pool(records: Iterable[QaRecord]) -> list[str]:
    """Self-pool: the spanned answer entities of every eligible record."""
    pool = []
    for record in records:
        surface = record.entity_surface
        if surface:
            pool.append(surface)
    return pool


def substitute_record(record: QaRecord, substitute: str) -> SubstitutionRecord:
    """Replace every occurrence of the spanned entity with ``substitute``."""
    surface = record.entity_surface
    start, _ = record.answer_entity_span
    context = record.gold_context
    occurrences_before = context[:start].count(surface)
    new_context = context.replace(surface, substitute)
    new_start = start + occurrences_before * (len(substitute) - len(surface))
    return SubstitutionRecord(
        base=record,
        substitute_entity=substitute,
        new_context=new_context,
        new_answers=(substitute,),
        new_span=(new_start, new_start + len(substitute)),
    )


def generate_conflict_set(
    records: Iterable[QaRecord],
    entity_pool: list[str] | None = None,
    seed: int = 0,
) -> tuple[list[SubstitutionRecord], list[tuple[str, str]]]:
    """Build the conflict set; returns (substitutions, skipped (id, reason) pairs)."""
    records = list(records)
    if entity_pool is None:
        entity_pool = default_entity_pool(records)
    if len({normalize_answer(e) for e in entity_pool}) < 2:
        raise PoolTooSmall("entity pool needs at least 2 distinct normalized entries")

    out: list[SubstitutionRecord] = []
    skipped: list[tuple[str, str]] = []
    for ordinal, record in enumerate(records):
        if record.gold_context is None or record.answer_entity_span is None:
            skipped.append((record.id, SKIP_NO_ANNOTATION))
            continue
        excluded = {normalize_answer(a) for a in record.answers}
        candidates = [e for e in entity_pool if normalize_answer(e) not in excluded]
        if not candidates:
            skipped.append((record.id, SKIP_POOL_TOO_SMALL))
            continue
        rng = random.Random(seed ^ ordinal)
        substitute = candidates[rng.randrange(len(candidates))]
        if substitute in record.gold_context:
            skipped.append((record.id, SKIP_SUBSTITUTE_PREEXISTS))
            continue
        out.append(substitute_record(record, substitute))
    return out, skipped


def restore_original(sub: SubstitutionRecord) -> str:
    """Swap the substitute back; byte-exact when it did not pre-exist."""
    return sub.new_context.replace(sub.substitute_entity, sub.base.entity_surface)


def write_conflict_jsonl(path: str | Path, subs: Iterable[SubstitutionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sub in subs:
            fh.write(json.dumps(sub.to_json(), sort_keys=True) + "\n")


def read_conflict_jsonl(path: str | Path) -> Iterator[QaRecord]:
    """Conflict files parse directly as evaluation datasets."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield QaRecord.from_json(json.loads(line))
