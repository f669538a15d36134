"""Minimal HTTP server speaking the ``POST /classify`` protocol.

Wraps any in-process oracle so the remote client can be exercised end to
end. Counts every request it answers.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

import numpy as np

from ..oracle import decode_image


class ClassifyServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, classify: Callable[[np.ndarray], int]):
        super().__init__(address, _Handler)
        self.classify = classify
        self.requests_seen = 0
        self.lock = threading.Lock()

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


class _Handler(BaseHTTPRequestHandler):
    server: ClassifyServer

    def log_message(self, format, *args):
        pass

    def _reply(self, status: int, payload: dict):
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.path != "/classify":
            self._reply(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        with self.server.lock:
            self.server.requests_seen += 1
        try:
            img = decode_image(json.loads(self.rfile.read(length)))
        except ValueError as exc:
            self._reply(400, {"error": str(exc)})
            return
        self._reply(200, {"label": int(self.server.classify(img))})


def serve_oracle(oracle, host: str = "127.0.0.1", port: int = 0) -> ClassifyServer:
    """Bind a server answering with ``oracle``'s labels (uncounted on the oracle side)."""
    return ClassifyServer((host, port), oracle._predict)
