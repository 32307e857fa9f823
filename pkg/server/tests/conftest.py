import socket
import threading
import time

import pytest
import uvicorn

from logitsd.app import ModelHost, create_app
from logitsd.models import load_model


class ServerThread:
    """uvicorn in a daemon thread on an ephemeral port."""

    def __init__(self, app):
        self._config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def start(self) -> str:
        self._thread.start()
        deadline = time.time() + 30
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start within 30s")
            time.sleep(0.02)
        sock = self._server.servers[0].sockets[0]
        host, port = sock.getsockname()[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)


@pytest.fixture(scope="session")
def tiny_adapter():
    return load_model("tiny:0")


@pytest.fixture(scope="session")
def endpoint(tiny_adapter):
    server = ServerThread(create_app(ModelHost(tiny_adapter)))
    url = server.start()
    yield url
    server.stop()


@pytest.fixture(scope="session")
def seq2seq_endpoint():
    adapter = load_model("tiny-seq2seq:0")
    server = ServerThread(create_app(ModelHost(adapter)))
    url = server.start()
    yield url
    server.stop()
