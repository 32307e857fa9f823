import random
import string

import numpy as np
import pytest

from trident.backends.base import VocabInfo
from trident.backends.scripted import ScriptedBackend
from trident.retrieval import Bm25Index, Passage

ASCII_ALPHABET = string.printable  # 100 distinct characters incl. whitespace

WORDS = (
    "apple baker cedar delta ember forge grove heron igloo jasper kelp lumen "
    "maple noble ochre piper quartz raven sable tundra umber vesper willow "
    "xenon yarrow zephyr anchor bison copper dune"
).split()


def make_random_passages(rng: random.Random, n: int, min_len: int = 3, max_len: int = 30):
    passages = []
    for i in range(n):
        length = rng.randint(min_len, max_len)
        text = " ".join(rng.choice(WORDS) for _ in range(length))
        passages.append(Passage(id=f"p{i:03d}", title=f"t{i}", text=text))
    return passages


def make_random_query(rng: random.Random, max_terms: int = 5) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, max_terms)))


def make_hash_backend(seed: int, vocab_size: int = 8) -> ScriptedBackend:
    """Scripted backend with deterministic pseudo-random logits everywhere."""
    return ScriptedBackend(
        vocab=VocabInfo(size=vocab_size, eos_id=vocab_size - 1),
        default="hash",
        seed=seed,
        identity=f"hash-{seed}",
    )


def make_ascii_backend(seed: int = 0, default="hash", table=None) -> ScriptedBackend:
    """Char-level scripted backend able to tokenize any printable ASCII text."""
    return ScriptedBackend(
        vocab=VocabInfo(size=len(ASCII_ALPHABET) + 1, eos_id=len(ASCII_ALPHABET)),
        alphabet=ASCII_ALPHABET,
        default=default,
        table=table,
        seed=seed,
        identity=f"ascii-{seed}",
    )


def eos_only_logits() -> list[float]:
    """Logit vector for the ASCII backend that always picks EOS."""
    return [0.0] * len(ASCII_ALPHABET) + [9.0]


@pytest.fixture
def toy_corpus():
    """20 hand-written passages with overlapping and unique vocabulary."""
    texts = [
        "apple orchards cover the northern valley",
        "the baker sells warm bread and apple pie",
        "cedar forests grow along the river delta",
        "ember storms lit the night sky over the forge",
        "a lone heron fished beside the igloo ruins",
        "jasper and quartz veins run through the quarry",
        "kelp beds shelter young fish near the shore",
        "lumen candles burn slowly in the chapel",
        "maple syrup season starts after the first thaw",
        "noble houses kept falcons and ravens",
        "ochre pigment was traded across the dunes",
        "the piper played while sable horses grazed",
        "quartz sand makes the clearest glass",
        "ravens remember faces for many years",
        "sable fur was prized by northern traders",
        "tundra moss feeds the migrating herds",
        "umber clay lines the river banks",
        "vesper bells ring at dusk in the village",
        "willow bark tea eases winter fevers",
        "zephyr winds cool the summer coast",
    ]
    return [Passage(id=f"toy-{i:02d}", title=f"toy {i}", text=t) for i, t in enumerate(texts)]


@pytest.fixture
def toy_index(toy_corpus):
    return Bm25Index(toy_corpus)


@pytest.fixture
def rng():
    return random.Random(20240814)


@pytest.fixture
def nprng():
    return np.random.default_rng(20240814)
