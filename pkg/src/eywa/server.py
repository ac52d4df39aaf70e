"""HTTP server exposing a backend registry behind the wire contract:
``POST /v1/invoke`` and ``GET /v1/describe``."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from eywa.backends import (
    BackendError,
    BackendRegistry,
    decode_request,
    default_mock_registry,
    encode_result,
    invoke,
)


class ProtocolServer:
    """Serves a registry over HTTP.  Start on port 0 to pick a free port;
    the bound port is available as ``.port`` after ``start()``."""

    def __init__(self, registry: BackendRegistry, port: int = 0, host: str = "127.0.0.1"):
        self.registry = registry
        self.host = host
        self.port = port
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> "ProtocolServer":
        registry = self.registry

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):
                pass

            def _send_json(self, status: int, obj: dict) -> None:
                body = json.dumps(obj).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/v1/describe":
                    self._send_json(
                        200,
                        {"backends": [d.to_json() for d in registry.descriptors()]},
                    )
                elif self.path == "/healthz":
                    body = b"ok"
                    self.send_response(200)
                    self.send_header("Content-Type", "text/plain")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                else:
                    self._send_json(404, {"error": {"code": "not_found", "message": self.path}})

            def do_POST(self):
                if self.path != "/v1/invoke":
                    self._send_json(404, {"error": {"code": "not_found", "message": self.path}})
                    return
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    request = decode_request(json.loads(raw))
                except (json.JSONDecodeError, BackendError, KeyError, TypeError) as exc:
                    self._send_json(
                        200,
                        {
                            "status": "error",
                            "output": None,
                            "usage": {
                                "input_tokens": 0,
                                "output_tokens": 0,
                                "wall_clock_ms": 0,
                                "backend_id": "",
                            },
                            "error": {"code": "bad_request", "message": str(exc)},
                        },
                    )
                    return
                result = invoke(request, registry)
                self._send_json(200, encode_result(result))

        self._httpd = ThreadingHTTPServer((self.host, self.port), Handler)
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def __enter__(self) -> "ProtocolServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_mock(port: int = 0, scripted_replies=("ok",)) -> ProtocolServer:
    """Serve the four bundled mock backends."""
    return ProtocolServer(default_mock_registry(scripted_replies), port=port).start()
