import math
import random
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from trident.contexts import (
    FIXED_IRRELEVANT_TEXT,
    FIXED_PASSAGE_ID,
    candidate_pool,
    derive_seed,
    fixed_passage,
    fixed_permuted_passage,
    permute_words,
    select_irrelevant,
    select_relevant,
)
from trident.errors import EmbedderUnavailable, EmptyPool, NoRetrievalHit, RemoteUnavailable
from trident.retrieval import Bm25Index, EmbeddingVector, Passage, TfidfEmbedder

FIXTURES = Path(__file__).parent / "fixtures"


class Poisoned:
    """Any attribute access is an error: proves a code path does no I/O."""

    def __getattr__(self, name):
        raise AssertionError(f"poisoned object was touched (attribute {name!r})")

    def __iter__(self):
        raise AssertionError("poisoned object was iterated")

    def __len__(self):
        raise AssertionError("poisoned object was measured")


class FailingEmbedder:
    def embed(self, text):
        raise RemoteUnavailable("embedder endpoint is down")


class TestFixedPassage:
    def test_opening_sentence(self):
        assert FIXED_IRRELEVANT_TEXT.startswith(
            "It was a pleasant weather day, with seasonally average temperatures."
        )

    def test_is_multi_sentence_filler(self):
        assert len(FIXED_IRRELEVANT_TEXT.split()) == 88

    def test_permuted_reference_is_word_permutation(self):
        """The shipped permuted variant is exactly a word-order shuffle."""
        reference = (FIXTURES / "permuted_fixed_passage.txt").read_text(encoding="utf-8")
        assert Counter(reference.split()) == Counter(FIXED_IRRELEVANT_TEXT.split())

    def test_permute_words_preserves_character_multiset(self):
        for seed in range(10):
            shuffled = permute_words(FIXED_IRRELEVANT_TEXT, seed)
            assert Counter(shuffled.replace(" ", "")) == Counter(
                FIXED_IRRELEVANT_TEXT.replace(" ", "")
            )
            assert Counter(shuffled.split()) == Counter(FIXED_IRRELEVANT_TEXT.split())

    def test_permute_words_seeded(self):
        assert permute_words("a b c d e", 7) == permute_words("a b c d e", 7)
        assert permute_words("a b c d e f g h", 1) != permute_words("a b c d e f g h", 2)


class TestSelectRelevant:
    def test_gold_passthrough(self, toy_index):
        gold = Passage(id="gold", title="", text="the answer lives here")
        assert select_relevant("whatever question", toy_index, gold=gold) is gold

    def test_rare_term_finds_unique_passage(self, toy_index):
        hit = select_relevant("what do ravens remember", toy_index)
        assert "ravens remember" in hit.text

    def test_no_hit_raises(self, toy_index):
        with pytest.raises(NoRetrievalHit):
            select_relevant("xylophone zeppelin", toy_index)

    def test_no_index_no_gold_raises(self):
        with pytest.raises(NoRetrievalHit):
            select_relevant("question", None)


class TestSelectIrrelevant:
    def test_random_forced_choice(self):
        c_plus = Passage("a", "", "alpha text")
        other = Passage("b", "", "beta text")
        for seed in range(20):
            chosen = select_irrelevant("random", c_plus, pool=[c_plus, other], seed=seed)
            assert chosen.id == "b"

    def test_random_is_seeded(self, toy_corpus):
        c_plus = toy_corpus[0]
        first = select_irrelevant("random", c_plus, pool=toy_corpus, seed=123)
        second = select_irrelevant("random", c_plus, pool=toy_corpus, seed=123)
        assert first.id == second.id

    def test_random_uniform_within_three_sigma(self, toy_corpus):
        c_plus = toy_corpus[0]
        pool = toy_corpus[:6]
        draws = Counter(
            select_irrelevant("random", c_plus, pool=pool, seed=s).id for s in range(10_000)
        )
        candidates = 5  # pool of 6 minus the relevant passage
        expected = 10_000 / candidates
        sigma = math.sqrt(10_000 * (1 / candidates) * (1 - 1 / candidates))
        assert set(draws) == {p.id for p in pool[1:]}
        for count in draws.values():
            assert abs(count - expected) <= 3 * sigma

    def test_random_empty_pool(self, toy_corpus):
        with pytest.raises(EmptyPool):
            select_irrelevant("random", toy_corpus[0], pool=[toy_corpus[0]], seed=0)

    def test_fixed_returns_the_shipped_passage(self):
        c_plus = Passage("a", "", "anything")
        passage = select_irrelevant("fixed", c_plus)
        assert passage.id == FIXED_PASSAGE_ID
        assert passage.text == FIXED_IRRELEVANT_TEXT
        assert passage.text.startswith("It was a pleasant weather day")

    def test_fixed_permuted_is_seeded_shuffle(self):
        c_plus = Passage("a", "", "anything")
        first = select_irrelevant("fixed_permuted", c_plus, seed=5)
        again = select_irrelevant("fixed_permuted", c_plus, seed=5)
        other = select_irrelevant("fixed_permuted", c_plus, seed=6)
        assert first.text == again.text
        assert first.text != other.text
        assert Counter(first.text.split()) == Counter(FIXED_IRRELEVANT_TEXT.split())

    def test_fixed_strategies_do_no_io(self):
        """fixed / fixed_permuted must never touch pool, index or embedder."""
        c_plus = Passage("a", "", "anything")
        for strategy in ("fixed", "fixed_permuted"):
            passage = select_irrelevant(
                strategy, c_plus, pool=None, embedder=Poisoned(), seed=3
            )
            assert passage.text

    def test_most_distant_matches_brute_force(self, toy_corpus, toy_index):
        embedder = TfidfEmbedder(toy_index)
        c_plus = toy_corpus[0]
        pool = toy_corpus[1:10]
        anchor = embedder.embed(c_plus.text)
        distances = {
            p.id: 1.0 - float(np.dot(embedder.embed(p.text).values, anchor.values))
            for p in pool
        }
        best = max(sorted(distances), key=lambda pid: distances[pid])
        chosen = select_irrelevant("most_distant", c_plus, pool=pool, embedder=embedder)
        assert chosen.id == best

    def test_most_distant_pool_order_invariant(self, toy_corpus, toy_index):
        embedder = TfidfEmbedder(toy_index)
        c_plus = toy_corpus[0]
        pool = toy_corpus[1:12]
        baseline = select_irrelevant("most_distant", c_plus, pool=pool, embedder=embedder)
        for seed in range(5):
            shuffled = list(pool)
            random.Random(seed).shuffle(shuffled)
            assert (
                select_irrelevant("most_distant", c_plus, pool=shuffled, embedder=embedder).id
                == baseline.id
            )

    def test_most_distant_tie_breaks_by_id(self):
        class TwoPointEmbedder:
            def embed(self, text):
                value = [1.0, 0.0] if "anchor" in text else [0.0, 1.0]
                return EmbeddingVector(np.array(value), normalized=True)

        c_plus = Passage("z", "", "anchor text")
        pool = [Passage("b", "", "far two"), Passage("a", "", "far one")]
        chosen = select_irrelevant("most_distant", c_plus, pool=pool, embedder=TwoPointEmbedder())
        assert chosen.id == "a"

    def test_most_distant_embedder_down(self, toy_corpus):
        with pytest.raises(EmbedderUnavailable):
            select_irrelevant(
                "most_distant", toy_corpus[0], pool=toy_corpus[1:], embedder=FailingEmbedder()
            )

    def test_most_distant_without_embedder(self, toy_corpus):
        with pytest.raises(EmbedderUnavailable):
            select_irrelevant("most_distant", toy_corpus[0], pool=toy_corpus[1:], embedder=None)

    def test_corpus_strategies_never_return_c_plus(self, toy_corpus, toy_index):
        embedder = TfidfEmbedder(toy_index)
        c_plus = toy_corpus[3]
        pool = toy_corpus
        for seed in range(50):
            assert select_irrelevant("random", c_plus, pool=pool, seed=seed).id != c_plus.id
        assert (
            select_irrelevant("most_distant", c_plus, pool=pool, embedder=embedder).id
            != c_plus.id
        )

    def test_unknown_strategy(self, toy_corpus):
        with pytest.raises(ValueError):
            select_irrelevant("telepathy", toy_corpus[0], pool=toy_corpus)


class TestCandidatePool:
    def test_excludes_rank_one(self, toy_corpus, toy_index):
        rank1 = toy_index.search("apple pie", k=1)[0].passage
        pool = candidate_pool("apple pie", toy_index, pool_size=100)
        assert rank1.id not in {p.id for p in pool}

    def test_pool_size_bounds(self, toy_index):
        pool = candidate_pool("the", toy_index, pool_size=5)
        assert len(pool) <= 4


class TestDeriveSeed:
    def test_xor_derivation(self):
        assert derive_seed(0, 5) == 5
        assert derive_seed(12, 0) == 12
        assert derive_seed(7, 3) == 7 ^ 3

    def test_distinct_per_ordinal(self):
        seeds = {derive_seed(99, i) for i in range(100)}
        assert len(seeds) == 100
