"""The HTTP surface: four endpoints, JSON bodies, UTF-8.

  GET  /v1/meta
  POST /v1/tokenize    {"text": str}
  POST /v1/detokenize  {"ids": [int]}
  POST /v1/logits      {"ids": [int], "decoder_ids": [int]?}

Status codes: 400 malformed ids or bad request shape, 413 over-length
context, 503 while the model is still loading. The protocol is stateless:
one request is one decoding step for one branch, nothing is cached across
requests, and /v1/meta values never change over the server's lifetime.
"""
from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from logitsd.models import ModelAdapter, load_model


class ModelHost:
    """Holds the adapter; supports deferred loading so 503 is observable."""

    def __init__(self, adapter: ModelAdapter | None = None):
        self._adapter = adapter
        self._lock = threading.Lock()

    @property
    def adapter(self) -> ModelAdapter | None:
        return self._adapter

    def load(self, spec: str, device: str = "cpu", max_context: int | None = None) -> None:
        adapter = load_model(spec, device=device, max_context=max_context)
        with self._lock:
            self._adapter = adapter


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _parse_ids(value, vocab_size: int, field: str) -> list[int]:
    if not isinstance(value, list) or not all(
        isinstance(i, int) and not isinstance(i, bool) for i in value
    ):
        raise ValueError(f"'{field}' must be a list of integers")
    for i in value:
        if not 0 <= i < vocab_size:
            raise ValueError(f"token id {i} outside vocabulary [0, {vocab_size})")
    return value


def create_app(host: ModelHost) -> FastAPI:
    app = FastAPI(title="logitsd", docs_url=None, redoc_url=None)

    async def _body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise ValueError("request body is not valid JSON") from None
        if not isinstance(body, dict):
            raise ValueError("request body must be a JSON object")
        return body

    @app.get("/v1/meta")
    def meta():
        adapter = host.adapter
        if adapter is None:
            return _error(503, "model is loading")
        return {
            "vocab_size": adapter.vocab_size,
            "eos_id": adapter.eos_id,
            "max_context": adapter.max_context,
            "model_id": adapter.model_id,
            "architecture": adapter.architecture,
        }

    @app.post("/v1/tokenize")
    async def tokenize(request: Request):
        adapter = host.adapter
        if adapter is None:
            return _error(503, "model is loading")
        try:
            body = await _body(request)
            text = body.get("text")
            if not isinstance(text, str):
                raise ValueError("'text' must be a string")
            return {"ids": adapter.tokenize(text)}
        except ValueError as exc:
            return _error(400, str(exc))

    @app.post("/v1/detokenize")
    async def detokenize(request: Request):
        adapter = host.adapter
        if adapter is None:
            return _error(503, "model is loading")
        try:
            body = await _body(request)
            ids = _parse_ids(body.get("ids"), adapter.vocab_size, "ids")
            return {"text": adapter.detokenize(ids)}
        except ValueError as exc:
            return _error(400, str(exc))

    @app.post("/v1/logits")
    async def logits(request: Request):
        adapter = host.adapter
        if adapter is None:
            return _error(503, "model is loading")
        try:
            body = await _body(request)
            ids = _parse_ids(body.get("ids"), adapter.vocab_size, "ids")
            decoder_ids = None
            if body.get("decoder_ids") is not None:
                decoder_ids = _parse_ids(body["decoder_ids"], adapter.vocab_size, "decoder_ids")
        except ValueError as exc:
            return _error(400, str(exc))
        total = len(ids) + len(decoder_ids or [])
        if total > adapter.max_context:
            return _error(413, f"context of {total} tokens exceeds limit {adapter.max_context}")
        try:
            return {"logits": adapter.logits(ids, decoder_ids)}
        except ValueError as exc:
            return _error(400, str(exc))

    return app
