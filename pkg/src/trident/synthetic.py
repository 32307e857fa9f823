"""Deterministic synthetic world for desk-scale end-to-end experiments.

The world is a set of capital-city facts that changed over time. The n-gram
backend is trained on a stale snapshot (old capitals plus QA transcripts in
the exact prompt format), while the passage corpus and gold contexts carry
the updated capitals. Closed-book decoding therefore answers from stale
memory; context-conditioned branches can answer from the updated passages.

An n-gram only conditions on its last ``order - 1`` tokens, so the world
ships its own prompt templates that end ``... <context> answer`` and builds
passages that end with the answer entity. The stale corpus also contains
echo drills ("X answer X") for every city, giving the model the one skill a
local window can express: repeating the entity that precedes the answer
marker. That makes the relevant branch genuinely context-sensitive, which is
all the contrastive ensemble needs to demonstrate its arbitration behavior.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from trident.backends.ngram import NGramBackend
from trident.evaluation import QaRecord
from trident.prompting import FewShotExample, PromptTemplate
from trident.retrieval import Passage

CLOSED_TEMPLATE = "question <question> answer"
OPEN_TEMPLATE = "question <question> context <context> answer"

NGRAM_ORDER = 3
DRILL_REPEATS = 60

_REGIONS = ("norland", "sudmark", "ostvale", "westmoor", "midreach", "seaward", "highfell", "lowmere")

_RESERVED = frozenset(
    "question answer context what is the capital of in region".split()
) | frozenset(_REGIONS)

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "tr", "st", "gl")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ea", "ou")
_COUNTRY_SUFFIXES = ("ia", "ova", "land", "istan", "onia")
_CITY_SUFFIXES = ("burg", "ton", "mir", "grad", "polis", "vale")


@dataclass(frozen=True)
class Fact:
    country: str
    old_capital: str
    new_capital: str
    changed: bool

    @property
    def current_capital(self) -> str:
        return self.new_capital if self.changed else self.old_capital


@dataclass
class SyntheticWorld:
    facts: list[Fact]
    passages: list[Passage]
    qa_records: list[QaRecord]
    shots: list[FewShotExample]
    stale_corpus: str
    templates: dict[str, PromptTemplate]
    ngram_order: int = NGRAM_ORDER

    def backend(self) -> NGramBackend:
        return NGramBackend(
            self.stale_corpus, order=self.ngram_order, mode="word", identity="synthetic-stale-ngram"
        )


def _name_maker(rng: random.Random):
    taken = set(_RESERVED)

    def make(suffixes: tuple[str, ...]) -> str:
        while True:
            name = (
                rng.choice(_ONSETS)
                + rng.choice(_VOWELS)
                + rng.choice(_ONSETS)
                + rng.choice(_VOWELS)
                + rng.choice(suffixes)
            )
            if name not in taken:
                taken.add(name)
                return name

    return make


def _passage_text(region: str, fact: Fact) -> str:
    country = fact.country.capitalize()
    city = fact.current_capital.capitalize()
    return f"In the {region} region, the capital of {country} is {city}."


def build_world(seed: int = 0, n_facts: int = 50, n_questions: int = 25) -> SyntheticWorld:
    if n_questions > n_facts:
        raise ValueError("cannot ask more questions than there are facts")
    rng = random.Random(seed)
    make_name = _name_maker(rng)

    facts = []
    for i in range(n_facts):
        country = make_name(_COUNTRY_SUFFIXES)
        old_capital = make_name(_CITY_SUFFIXES)
        new_capital = make_name(_CITY_SUFFIXES)
        # most asked facts changed since the stale snapshot; every fourth did not
        changed = (i % 4 != 3) if i < n_questions else (i % 2 == 0)
        facts.append(Fact(country, old_capital, new_capital, changed))

    passages = []
    for i, fact in enumerate(facts):
        region = _REGIONS[i % len(_REGIONS)]
        passages.append(
            Passage(id=f"fact-{i:03d}", title=fact.country.capitalize(), text=_passage_text(region, fact))
        )

    qa_records = []
    for i in range(n_questions):
        fact = facts[i]
        text = passages[i].text
        city = fact.current_capital.capitalize()
        start = text.rindex(city)
        qa_records.append(
            QaRecord(
                id=f"q-{i:03d}",
                question=f"What is the capital of {fact.country.capitalize()}?",
                answers=(city,),
                gold_context=text,
                entity_popularity=3 * 10 ** (i % 7),
                answer_entity_span=(start, start + len(city)),
            )
        )

    shots = []
    for i in range(n_questions, min(n_questions + 5, n_facts)):
        fact = facts[i]
        shots.append(
            FewShotExample(
                question=f"What is the capital of {fact.country.capitalize()}?",
                answer=fact.current_capital.capitalize(),
                context=passages[i].text,
            )
        )

    # Stale snapshot: QA transcripts with the OLD capitals, echo drills for
    # every city name, and one line holding the template marker words.
    lines = ["question context answer"]
    for fact in facts:
        lines.append(f"question what is the capital of {fact.country} answer {fact.old_capital}")
    cities = sorted({f.old_capital for f in facts} | {f.new_capital for f in facts})
    for city in cities:
        lines.extend([f"{city} answer {city}"] * DRILL_REPEATS)

    templates = {
        "closed": PromptTemplate("closed", CLOSED_TEMPLATE),
        "open": PromptTemplate("open", OPEN_TEMPLATE),
    }
    return SyntheticWorld(
        facts=facts,
        passages=passages,
        qa_records=qa_records,
        shots=shots,
        stale_corpus="\n".join(lines) + "\n",
        templates=templates,
    )


def write_world(world: SyntheticWorld, directory: str | Path) -> None:
    """Materialize the world as the file formats the CLI consumes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "passages.jsonl", "w", encoding="utf-8") as fh:
        for p in world.passages:
            fh.write(json.dumps(p.to_json(), sort_keys=True) + "\n")
    with open(directory / "qa.jsonl", "w", encoding="utf-8") as fh:
        for r in world.qa_records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    with open(directory / "shots.jsonl", "w", encoding="utf-8") as fh:
        for s in world.shots:
            fh.write(
                json.dumps(
                    {"question": s.question, "answer": s.answer, "context": s.context},
                    sort_keys=True,
                )
                + "\n"
            )
    (directory / "stale_corpus.txt").write_text(world.stale_corpus, encoding="utf-8")
    (directory / "templates.json").write_text(
        json.dumps({"closed": CLOSED_TEMPLATE, "open": OPEN_TEMPLATE}, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
