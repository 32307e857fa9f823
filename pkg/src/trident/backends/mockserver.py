"""Serve any local backend over the logits wire protocol.

Backs integration tests and the ``trident serve-mock`` subcommand: the remote
client can then be exercised without a neural model anywhere near the
process. Stateless by construction; one request = one decoding step.
"""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from trident.backends.base import LMBackend
from trident.errors import PrefixTooLong, TridentError


def _make_handler(backend: LMBackend):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            return json.loads(raw.decode("utf-8"))

        def do_GET(self):
            if self.path == "/v1/meta":
                self._send(
                    200,
                    {
                        "vocab_size": backend.vocab.size,
                        "eos_id": backend.vocab.eos_id,
                        "max_context": backend.max_context or 0,
                        "model_id": backend.identity,
                    },
                )
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            try:
                body = self._read_body()
            except (ValueError, UnicodeDecodeError):
                self._send(400, {"error": "malformed JSON body"})
                return
            try:
                if self.path == "/v1/tokenize":
                    self._send(200, {"ids": backend.tokenize(str(body.get("text", "")))})
                elif self.path == "/v1/detokenize":
                    self._send(200, {"text": backend.detokenize(_ids(body))})
                elif self.path == "/v1/logits":
                    logits = backend.next_logits(_ids(body))
                    self._send(200, {"logits": logits.tolist()})
                else:
                    self._send(404, {"error": f"unknown path {self.path}"})
            except PrefixTooLong as exc:
                self._send(413, {"error": str(exc)})
            except (TridentError, ValueError) as exc:
                self._send(400, {"error": str(exc)})

    return Handler


def _ids(body: dict) -> list[int]:
    ids = body.get("ids")
    if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
        raise ValueError("'ids' must be a list of integers")
    return ids


class MockLogitsServer:
    """In-process wire-protocol server around a local backend."""

    def __init__(self, backend: LMBackend, host: str = "127.0.0.1", port: int = 0):
        self._server = ThreadingHTTPServer((host, port), _make_handler(backend))
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockLogitsServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def __enter__(self) -> "MockLogitsServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
