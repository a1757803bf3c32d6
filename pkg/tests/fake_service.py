"""A minimal in-process HTTP stand-in for the proposal service."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def default_handler(request: dict) -> dict:
    return {
        "proposals": [
            {"index": mask["index"], "candidates": ["an unrelated filler phrase"]}
            for mask in request["masks"]
        ]
    }


class FakeProposalService:
    """Serves POST /v1/propose from a pluggable function.

    status_queue entries are consumed first: each request pops one status
    code (or a raw-bytes marker) and answers with it instead of calling
    the handler. All received request bodies are recorded.
    """

    def __init__(self, handler_fn=None):
        self.handler_fn = handler_fn or default_handler
        self.requests: list[dict] = []
        self.status_queue: list = []
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                service.requests.append(body)
                if self.path != "/v1/propose":
                    self.send_response(404)
                    self.end_headers()
                    return
                if service.status_queue:
                    action = service.status_queue.pop(0)
                    if action == "garbage":
                        payload = b"this is not json"
                        self.send_response(200)
                    else:
                        payload = json.dumps({"error": "scripted"}).encode()
                        self.send_response(action)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                    return
                payload = json.dumps(service.handler_fn(body)).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
