"""Scripted backend: a deterministic lookup table from prefixes to logits.

Used for unit tests, constructed end-to-end checks and the mock wire server.
The table maps exact token prefixes to logit vectors; prefixes not in the
table fall back to a configurable policy:

* ``"error"`` - raise UnknownPrefix (the default),
* ``"hash"``  - deterministic pseudo-random logits derived from (seed, prefix),
* a vector   - constant logits for every unlisted prefix.

The hash fallback makes "50 random scripted backends" style fuzzing possible
without enumerating every reachable prefix.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from trident.backends.base import LMBackend, TokenSequence, VocabInfo
from trident.errors import UnknownPrefix


class ScriptedBackend(LMBackend):
    kind = "scripted"

    def __init__(
        self,
        vocab: VocabInfo,
        table: dict[tuple[int, ...], np.ndarray] | None = None,
        alphabet: str | None = None,
        default: str | np.ndarray = "error",
        seed: int = 0,
        identity: str = "scripted",
    ):
        self.vocab = vocab
        self.table = {}
        for prefix, logits in (table or {}).items():
            self.table[tuple(prefix)] = self._as_logits(logits)
        if alphabet is not None:
            if len(set(alphabet)) != len(alphabet):
                raise ValueError("alphabet has repeated characters")
            if len(alphabet) > vocab.size:
                raise ValueError("alphabet larger than vocabulary")
        self.alphabet = alphabet
        self._char_to_id = {c: i for i, c in enumerate(alphabet)} if alphabet else {}
        if isinstance(default, str):
            if default not in ("error", "hash"):
                raise ValueError(f"unknown default policy {default!r}")
            self.default = default
        else:
            self.default = self._as_logits(default)
        self.seed = seed
        self.identity = identity
        self.max_context = None

    def _as_logits(self, values) -> np.ndarray:
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (self.vocab.size,):
            raise ValueError(f"logit vector has shape {arr.shape}, expected ({self.vocab.size},)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("logit vector contains non-finite entries")
        return arr

    def tokenize(self, text: str) -> TokenSequence:
        if text == "":
            return []
        if self.alphabet is None:
            # no alphabet: text is the canonical id rendering, e.g. "3 1 2"
            try:
                ids = [int(part) for part in text.split()]
            except ValueError:
                raise ValueError(
                    "scripted backend without an alphabet tokenizes id strings only"
                ) from None
            self.check_prefix(ids)
            return ids
        try:
            return [self._char_to_id[c] for c in text]
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} not in scripted alphabet") from None

    def detokenize(self, tokens: TokenSequence) -> str:
        if not tokens:
            return ""
        if self.alphabet is None:
            return " ".join(str(t) for t in tokens if t != self.vocab.eos_id)
        chars = []
        for tok in tokens:
            if 0 <= tok < len(self.alphabet):
                chars.append(self.alphabet[tok])
            elif tok == self.vocab.eos_id:
                continue
            else:
                raise ValueError(f"token id {tok} not representable by alphabet")
        return "".join(chars)

    def next_logits(self, prefix: TokenSequence, prompt_len: int | None = None) -> np.ndarray:
        self.check_prefix(prefix)
        key = tuple(prefix)
        if key in self.table:
            return self.table[key].copy()
        if isinstance(self.default, np.ndarray):
            return self.default.copy()
        if self.default == "hash":
            return self._hash_logits(key)
        raise UnknownPrefix(f"no scripted logits for prefix {list(prefix)}")

    def _hash_logits(self, prefix: tuple[int, ...]) -> np.ndarray:
        digest = hashlib.blake2b(
            self.seed.to_bytes(8, "little", signed=True)
            + b"".join(t.to_bytes(4, "little") for t in prefix),
            digest_size=8,
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self.vocab.size)

    # --- JSON definition files ---

    @classmethod
    def from_json(cls, path: str | Path, identity: str | None = None) -> "ScriptedBackend":
        """Load a definition file: stringified prefix id lists -> logit arrays."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        vocab = VocabInfo(size=int(raw["vocab_size"]), eos_id=int(raw["eos_id"]))
        table = {}
        for key, logits in raw.get("table", {}).items():
            ids = json.loads(key)
            if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
                raise ValueError(f"table key {key!r} is not a list of token ids")
            table[tuple(ids)] = logits
        return cls(
            vocab=vocab,
            table=table,
            alphabet=raw.get("alphabet"),
            default=raw.get("default", "error"),
            seed=int(raw.get("seed", 0)),
            identity=identity or raw.get("identity", f"scripted:{Path(path).name}"),
        )

    def to_json(self, path: str | Path) -> None:
        payload = {
            "vocab_size": self.vocab.size,
            "eos_id": self.vocab.eos_id,
            "table": {json.dumps(list(k)): v.tolist() for k, v in self.table.items()},
            "identity": self.identity,
            "seed": self.seed,
        }
        if self.alphabet is not None:
            payload["alphabet"] = self.alphabet
        if isinstance(self.default, np.ndarray):
            payload["default"] = self.default.tolist()
        elif self.default != "error":
            payload["default"] = self.default
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
