"""Toy n-gram language model with add-one smoothing.

A fully deterministic, trainable-in-milliseconds stand-in for parametric
knowledge. Training it on a stale snapshot of facts gives a model whose
"beliefs" can be contradicted by retrieved contexts, which is exactly what
the knowledge-conflict experiments need.

Counts are kept for every context length from 0 to order-1, so prefixes
shorter than the full window are still well defined. Add-one smoothing makes
every token's probability strictly positive.
"""
from __future__ import annotations

import hashlib
import re
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np

from trident.backends.base import LMBackend, TokenSequence, VocabInfo

_WORD_RE = re.compile(r"[0-9a-z]+")

EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"


def word_tokens(text: str) -> list[str]:
    """Lowercase and keep alphanumeric runs; punctuation acts as a separator."""
    return _WORD_RE.findall(text.lower())


class NGramBackend(LMBackend):
    kind = "ngram"

    def __init__(self, corpus: str, order: int = 3, mode: str = "word", identity: str | None = None):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if mode not in ("word", "char"):
            raise ValueError(f"mode must be 'word' or 'char', got {mode!r}")
        self.order = order
        self.mode = mode
        self.max_context = None

        lines = [ln for ln in corpus.splitlines() if ln.strip()] or [corpus]
        tokenized_lines = [self._surface_tokens(ln) for ln in lines]

        symbols = sorted({tok for line in tokenized_lines for tok in line})
        self._symbols = symbols
        self._sym_to_id = {s: i for i, s in enumerate(symbols)}
        self.eos_id = len(symbols)
        self.unk_id = len(symbols) + 1
        self.vocab = VocabInfo(size=len(symbols) + 2, eos_id=self.eos_id)

        # counts[l][context_tuple] -> Counter of next ids, for l = 0..order-1
        self._counts: list[dict[tuple[int, ...], Counter]] = [
            defaultdict(Counter) for _ in range(order)
        ]
        for line in tokenized_lines:
            ids = [self._sym_to_id[t] for t in line] + [self.eos_id]
            for pos, nxt in enumerate(ids):
                for ctx_len in range(min(self.order - 1, pos) + 1):
                    ctx = tuple(ids[pos - ctx_len:pos])
                    self._counts[ctx_len][ctx][nxt] += 1

        if identity is None:
            digest = hashlib.sha256(corpus.encode("utf-8")).hexdigest()[:12]
            identity = f"ngram-{mode}-o{order}-{digest}"
        self.identity = identity

    def _surface_tokens(self, text: str) -> list[str]:
        if self.mode == "char":
            return list(text)
        return word_tokens(text)

    def tokenize(self, text: str) -> TokenSequence:
        return [self._sym_to_id.get(t, self.unk_id) for t in self._surface_tokens(text)]

    def detokenize(self, tokens: TokenSequence) -> str:
        parts = []
        for tok in tokens:
            if tok == self.eos_id:
                continue
            if tok == self.unk_id:
                parts.append(UNK_TOKEN)
            elif 0 <= tok < len(self._symbols):
                parts.append(self._symbols[tok])
            else:
                raise ValueError(f"token id {tok} outside vocabulary")
        sep = "" if self.mode == "char" else " "
        return sep.join(parts)

    def next_logits(self, prefix: TokenSequence, prompt_len: int | None = None) -> np.ndarray:
        self.check_prefix(prefix)
        ctx_len = min(self.order - 1, len(prefix))
        ctx = tuple(prefix[len(prefix) - ctx_len:])
        counts = self._counts[ctx_len].get(ctx)
        size = self.vocab.size
        freq = np.zeros(size, dtype=np.float64)
        total = 0
        if counts:
            for tok, c in counts.items():
                freq[tok] = c
            total = sum(counts.values())
        # add-one smoothing: log((c + 1) / (total + V)), strictly finite
        return np.log(freq + 1.0) - np.log(total + size)

    @classmethod
    def from_file(cls, path: str | Path, order: int = 3, mode: str = "word") -> "NGramBackend":
        text = Path(path).read_text(encoding="utf-8")
        return cls(text, order=order, mode=mode, identity=f"ngram-{mode}-o{order}:{Path(path).name}")
