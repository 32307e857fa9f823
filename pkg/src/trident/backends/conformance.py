"""Wire-protocol conformance checks, reusable against any logits server.

The same checks run against the in-process mock server and against real
server implementations: point them at an endpoint and they assert the
behaviors every compliant server must show. Each check raises AssertionError
with a readable message on violation.
"""
from __future__ import annotations

import random
import string

import numpy as np

from trident.backends.remote import RemoteBackend
from trident.decoding import softmax

ASCII_POOL = string.ascii_letters + string.digits + string.punctuation + " "


def random_ascii(rng: random.Random, max_len: int = 40) -> str:
    return "".join(rng.choice(ASCII_POOL) for _ in range(rng.randrange(max_len + 1)))


def check_meta(backend: RemoteBackend) -> None:
    assert backend.vocab.size > 0, "vocab_size must be positive"
    assert 0 <= backend.vocab.eos_id < backend.vocab.size, "eos_id outside vocabulary"
    assert backend.model_id, "model_id must be non-empty"


def check_tokenize_roundtrip(backend: RemoteBackend, n: int = 100, seed: int = 1234) -> None:
    """detokenize(tokenize(s)) must equal the server's normalization of s.

    Normalization is server-declared, so the operational check is stability:
    one round trip reaches the normal form, a second must be the identity.
    """
    rng = random.Random(seed)
    for _ in range(n):
        text = random_ascii(rng)
        once = backend.detokenize(backend.tokenize(text))
        twice = backend.detokenize(backend.tokenize(once))
        assert once == twice, (
            f"round-trip unstable: {text!r} -> {once!r} -> {twice!r}"
        )


def check_empty_string(backend: RemoteBackend) -> None:
    assert backend.tokenize("") == [], "tokenize('') must be []"
    assert backend.detokenize([]) == "", "detokenize([]) must be ''"


def check_logits_contract(backend: RemoteBackend, n_prefixes: int = 50, seed: int = 99) -> None:
    """Length, finiteness and softmax normalization over random prefixes."""
    rng = random.Random(seed)
    size = backend.vocab.size
    for _ in range(n_prefixes):
        prefix = [rng.randrange(size) for _ in range(rng.randrange(8))]
        logits = backend.next_logits(prefix)
        assert logits.shape == (size,), f"got {logits.shape[0]} logits, vocab is {size}"
        assert np.all(np.isfinite(logits)), "non-finite logits"
        assert abs(softmax(logits).sum() - 1.0) < 1e-9, "softmax does not normalize"


def check_determinism(backend: RemoteBackend, n_prefixes: int = 20, seed: int = 7,
                      tolerance: float = 1e-6) -> None:
    """Repeated identical requests must agree elementwise within tolerance."""
    rng = random.Random(seed)
    size = backend.vocab.size
    for _ in range(n_prefixes):
        prefix = [rng.randrange(size) for _ in range(rng.randrange(8))]
        first = backend.next_logits(prefix)
        second = backend.next_logits(prefix)
        worst = float(np.max(np.abs(first - second))) if size else 0.0
        assert worst < tolerance, f"repeated logits differ by {worst}"


def check_detokenize_parity(backend: RemoteBackend, n: int = 100, seed: int = 4321) -> None:
    """Client detokenize must agree with a raw call to the server endpoint."""
    import requests

    rng = random.Random(seed)
    size = backend.vocab.size
    for _ in range(n):
        ids = [rng.randrange(size) for _ in range(rng.randrange(12))]
        via_client = backend.detokenize(ids)
        raw = requests.post(
            f"{backend.endpoint}/v1/detokenize", json={"ids": ids}, timeout=30
        ).json()["text"]
        assert via_client == raw, f"client {via_client!r} != server {raw!r} for {ids}"


ALL_CHECKS = (
    check_meta,
    check_empty_string,
    check_tokenize_roundtrip,
    check_logits_contract,
    check_determinism,
    check_detokenize_parity,
)


def run_all(endpoint: str) -> list[str]:
    """Run every check against ``endpoint``; returns the names that passed."""
    backend = RemoteBackend(endpoint)
    passed = []
    for check in ALL_CHECKS:
        check(backend)
        passed.append(check.__name__)
    return passed
