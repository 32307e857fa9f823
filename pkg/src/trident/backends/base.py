"""Uniform next-token-logits interface over interchangeable language models.

A backend owns a vocabulary, a tokenizer pair and a ``next_logits`` function.
All decoding strategies are written against this interface, so a scripted
table, a toy n-gram model and a remote neural model are interchangeable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trident.errors import PrefixTooLong, VocabMismatch

TokenSequence = list[int]


@dataclass(frozen=True)
class VocabInfo:
    """Vocabulary metadata every backend must declare."""

    size: int
    eos_id: int
    pad_id: int | None = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"vocab size must be positive, got {self.size}")
        if not 0 <= self.eos_id < self.size:
            raise ValueError(f"eos_id {self.eos_id} outside [0, {self.size})")
        if self.pad_id is not None and not 0 <= self.pad_id < self.size:
            raise ValueError(f"pad_id {self.pad_id} outside [0, {self.size})")


@dataclass(frozen=True)
class BackendDescriptor:
    """Identity record for reproducibility logs."""

    kind: str  # scripted | ngram | remote
    vocab: VocabInfo
    identity: str


class LMBackend:
    """Abstract language-model backend.

    Subclasses set ``vocab``, ``kind`` and ``identity`` and implement
    ``tokenize``, ``detokenize`` and ``next_logits``. ``max_context`` is None
    for unbounded backends. Instances must be safe for concurrent read-only
    queries once constructed.
    """

    vocab: VocabInfo
    kind: str = "abstract"
    identity: str = "abstract"
    max_context: int | None = None

    def tokenize(self, text: str) -> TokenSequence:
        raise NotImplementedError

    def detokenize(self, tokens: TokenSequence) -> str:
        raise NotImplementedError

    def next_logits(self, prefix: TokenSequence, prompt_len: int | None = None) -> np.ndarray:
        """Return the dense next-token logit vector for ``prefix``.

        ``prompt_len`` marks the prompt/generation boundary inside ``prefix``;
        only encoder-decoder remote models need it, everyone else ignores it.
        """
        raise NotImplementedError

    @property
    def descriptor(self) -> BackendDescriptor:
        return BackendDescriptor(kind=self.kind, vocab=self.vocab, identity=self.identity)

    def check_prefix(self, prefix: TokenSequence) -> None:
        """Validate ids and declared context budget before a query."""
        size = self.vocab.size
        for tok in prefix:
            if not 0 <= tok < size:
                raise ValueError(f"token id {tok} outside vocabulary [0, {size})")
        if self.max_context is not None and len(prefix) > self.max_context:
            raise PrefixTooLong(
                f"prefix of {len(prefix)} tokens exceeds max context {self.max_context}"
            )


def require_same_vocab(a: LMBackend, b: LMBackend) -> None:
    """Logit arithmetic across misaligned vocabularies is meaningless."""
    if a.vocab.size != b.vocab.size or a.vocab.eos_id != b.vocab.eos_id:
        raise VocabMismatch(
            f"vocab mismatch: {a.identity} has (size={a.vocab.size}, eos={a.vocab.eos_id}) "
            f"but {b.identity} has (size={b.vocab.size}, eos={b.vocab.eos_id})"
        )
