"""Client for the logits wire protocol (HTTP + JSON, UTF-8).

Endpoints:
  GET  /v1/meta        -> {"vocab_size", "eos_id", "max_context", "model_id"}
  POST /v1/tokenize    {"text": str}  -> {"ids": [int]}
  POST /v1/detokenize  {"ids": [int]} -> {"text": str}
  POST /v1/logits      {"ids": [int]} -> {"logits": [float * vocab_size]}

Logits come back as the full dense vector; the contrastive ensemble needs
every entry, so top-k truncation is not an option. Servers may declare
"architecture": "encoder-decoder" in meta, in which case logits requests
split the prefix into encoder ids and a "decoder_ids" generation suffix.
"""
from __future__ import annotations

import numpy as np
import requests

from trident.backends.base import LMBackend, TokenSequence, VocabInfo
from trident.errors import PrefixTooLong, RemoteUnavailable, VocabMismatch

DEFAULT_TIMEOUT = 60.0


class RemoteBackend(LMBackend):
    kind = "remote"

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()
        meta = self._get("/v1/meta")
        try:
            self.vocab = VocabInfo(size=int(meta["vocab_size"]), eos_id=int(meta["eos_id"]))
            # servers declaring 0 or nothing get the default remote budget
            self.max_context = int(meta["max_context"]) if meta.get("max_context") else 4096
            self.model_id = str(meta.get("model_id", "unknown"))
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteUnavailable(f"malformed /v1/meta from {self.endpoint}: {exc}") from exc
        self.architecture = meta.get("architecture", "decoder-only")
        self.identity = f"remote:{self.model_id}@{self.endpoint}"

    def _get(self, path: str) -> dict:
        try:
            resp = self._session.get(self.endpoint + path, timeout=self.timeout)
        except requests.RequestException as exc:
            raise RemoteUnavailable(f"GET {path} failed against {self.endpoint}: {exc}") from exc
        return self._payload(resp, path)

    def _post(self, path: str, body: dict) -> dict:
        try:
            resp = self._session.post(self.endpoint + path, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise RemoteUnavailable(f"POST {path} failed against {self.endpoint}: {exc}") from exc
        return self._payload(resp, path)

    def _payload(self, resp: requests.Response, path: str) -> dict:
        if resp.status_code == 413:
            raise PrefixTooLong(f"server rejected over-length context on {path}")
        if resp.status_code != 200:
            raise RemoteUnavailable(
                f"{path} returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return resp.json()
        except ValueError as exc:
            raise RemoteUnavailable(f"{path} returned non-JSON body") from exc

    def tokenize(self, text: str) -> TokenSequence:
        ids = self._post("/v1/tokenize", {"text": text}).get("ids")
        if ids is None:
            raise RemoteUnavailable("tokenize response lacks 'ids'")
        return [int(i) for i in ids]

    def detokenize(self, tokens: TokenSequence) -> str:
        text = self._post("/v1/detokenize", {"ids": list(tokens)}).get("text")
        if text is None:
            raise RemoteUnavailable("detokenize response lacks 'text'")
        return text

    def next_logits(self, prefix: TokenSequence, prompt_len: int | None = None) -> np.ndarray:
        self.check_prefix(prefix)
        if self.architecture == "encoder-decoder":
            boundary = len(prefix) if prompt_len is None else prompt_len
            body = {"ids": list(prefix[:boundary]), "decoder_ids": list(prefix[boundary:])}
        else:
            body = {"ids": list(prefix)}
        logits = self._post("/v1/logits", body).get("logits")
        if logits is None:
            raise RemoteUnavailable("logits response lacks 'logits'")
        arr = np.asarray(logits, dtype=np.float64)
        if arr.shape != (self.vocab.size,):
            raise VocabMismatch(
                f"server returned {arr.shape[0]} logits but handshake declared {self.vocab.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise RemoteUnavailable("server returned non-finite logits")
        return arr
