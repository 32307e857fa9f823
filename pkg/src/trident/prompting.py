"""Prompt templates and k-shot assembly for closed- and open-book QA.

Templates are exact strings with <context> and <question> placeholders.
Demonstrations render first, each followed by its gold answer and a blank
line; the target question comes last and the prompt ends with "Answer: "
(one trailing space, no newline) so greedy continuation starts the answer.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from trident.errors import ConfigError, MissingContext

CLOSED_TEMPLATE_TEXT = "Answer the following question. Question: <question> Answer:"
OPEN_TEMPLATE_TEXT = (
    "Answer the question based on the context below. "
    "Context: <context> Question: <question> Answer:"
)


@dataclass(frozen=True)
class PromptTemplate:
    mode: str  # closed | open
    text: str

    def __post_init__(self):
        if self.mode not in ("closed", "open"):
            raise ConfigError(f"template mode must be closed or open, got {self.mode!r}")
        if "<question>" not in self.text:
            raise ConfigError(f"{self.mode} template lacks a <question> placeholder")
        if self.mode == "closed" and "<context>" in self.text:
            raise ConfigError("closed template must not use <context>")
        if self.mode == "open" and "<context>" not in self.text:
            raise ConfigError("open template requires a <context> placeholder")

    def fill(self, question: str, context: str | None = None) -> str:
        if self.mode == "open":
            if context is None:
                raise MissingContext("open-book rendering requires a context")
            return self.text.replace("<context>", context).replace("<question>", question)
        return self.text.replace("<question>", question)


DEFAULT_CLOSED = PromptTemplate("closed", CLOSED_TEMPLATE_TEXT)
DEFAULT_OPEN = PromptTemplate("open", OPEN_TEMPLATE_TEXT)


@dataclass(frozen=True)
class FewShotExample:
    question: str
    answer: str
    context: str | None = None


def render(
    mode: str,
    question: str,
    context: str | None = None,
    shots: Sequence[FewShotExample] = (),
    templates: dict[str, PromptTemplate] | None = None,
) -> str:
    """Render a full prompt: demonstrations, then the target question."""
    templates = templates or {"closed": DEFAULT_CLOSED, "open": DEFAULT_OPEN}
    try:
        template = templates[mode]
    except KeyError:
        raise ConfigError(f"no template for mode {mode!r}") from None

    blocks = []
    for shot in shots:
        if mode == "open" and shot.context is None:
            raise MissingContext(f"open-book shot {shot.question!r} lacks a context")
        blocks.append(template.fill(shot.question, shot.context) + " " + shot.answer)
    blocks.append(template.fill(question, context) + " ")
    return "\n\n".join(blocks)


def load_templates(path: str | Path) -> dict[str, PromptTemplate]:
    """Template override file: JSON with optional "closed" and "open" strings."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    templates = {"closed": DEFAULT_CLOSED, "open": DEFAULT_OPEN}
    for mode in ("closed", "open"):
        if mode in raw:
            templates[mode] = PromptTemplate(mode, raw[mode])
    return templates


def load_shots(path: str | Path) -> list[FewShotExample]:
    shots = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            shots.append(
                FewShotExample(
                    question=obj["question"],
                    answer=obj["answer"],
                    context=obj.get("context"),
                )
            )
    return shots


def select_shots(
    pool: Iterable[FewShotExample], k: int, seed: int | None = None
) -> list[FewShotExample]:
    """Seeded selection of k demonstrations; seed None keeps pool order."""
    pool = list(pool)
    if k > len(pool):
        raise ConfigError(f"requested {k} shots but the pool has {len(pool)}")
    if seed is None:
        return pool[:k]
    rng = random.Random(seed)
    return rng.sample(pool, k)
