"""HTTP surface: ``POST /v1/invoke``, ``GET /v1/describe``,
``GET /healthz``.  Field names are byte-exact with the client-side wire
contract; foundation-model calls always report zero language tokens."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence

from fm_server.predictors import (
    KIND_TAB,
    KIND_TS,
    PredictorError,
    ServedModel,
    default_models,
)


class WireError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def _continue_timestamps(timestamps: Sequence[str], horizon: int) -> list[str]:
    # Integer timestamps continue arithmetically; anything else falls
    # back to positional indices.
    try:
        last = int(timestamps[-1])
        step = 1
        if len(timestamps) >= 2:
            step = int(timestamps[-1]) - int(timestamps[-2]) or 1
        return [str(last + step * (i + 1)) for i in range(horizon)]
    except ValueError:
        start = len(timestamps)
        return [f"t{start + i}" for i in range(horizon)]


def _handle_request(obj: dict, models: dict[str, ServedModel]) -> dict:
    for name in ("backend_id", "task_type", "payload"):
        if name not in obj:
            raise WireError("bad_request", f"missing field {name!r}")
    payload = obj["payload"]
    if not isinstance(payload, dict) or payload.get("kind") not in ("series", "table"):
        raise WireError(
            "bad_request", f"unsupported payload kind {payload.get('kind') if isinstance(payload, dict) else payload!r}"
        )
    backend_id = obj["backend_id"]
    if backend_id not in models:
        raise WireError("unknown_backend", f"unknown backend {backend_id!r}")
    model = models[backend_id]
    config = obj.get("config") or {}
    try:
        if model.kind == KIND_TS:
            if payload["kind"] != "series":
                raise WireError("backend", "forecast payload must be a series")
            horizon = config.get("horizon")
            if not isinstance(horizon, int) or horizon < 1:
                raise WireError("backend", "config.horizon must be an integer >= 1")
            values = [float(v) for v in payload["values"]]
            forecast = model.predictor(values, horizon, config)
            stamps = _continue_timestamps(
                [str(t) for t in payload["timestamps"]], horizon
            )
            return {
                "kind": "series",
                "timestamps": stamps,
                "values": [float(v) for v in forecast],
            }
        if model.kind == KIND_TAB:
            if payload["kind"] != "table":
                raise WireError("backend", "tabular payload must be a table")
            predictions = model.predictor(
                [str(c) for c in payload["columns"]],
                [[str(c) for c in row] for row in payload["rows"]],
                str(payload.get("target_column", config.get("target_column", ""))),
                config,
            )
            return {"kind": "values", "values": list(predictions)}
        raise WireError("backend", f"unservable model kind {model.kind!r}")
    except PredictorError as exc:
        raise WireError("backend", str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError("bad_request", f"malformed payload: {exc}") from None


def _result(status: str, output, backend_id: str, wall_clock_ms: int, error=None) -> dict:
    return {
        "status": status,
        "output": output,
        "usage": {
            "input_tokens": 0,
            "output_tokens": 0,
            "wall_clock_ms": wall_clock_ms,
            "backend_id": backend_id,
        },
        "error": error,
    }


class FmServer:
    """Serves a set of ServedModels.  Start on port 0 to pick a free
    port; the bound port is available as ``.port`` after ``start()``."""

    def __init__(
        self,
        models: Sequence[ServedModel] | None = None,
        port: int = 0,
        host: str = "127.0.0.1",
    ):
        models = list(models) if models is not None else default_models()
        self.models = {m.backend_id: m for m in models}
        if len(self.models) != len(models):
            raise PredictorError("duplicate backend_id among served models")
        self.host = host
        self.port = port
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> "FmServer":
        models = self.models

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
                        200, {"backends": [m.descriptor() for m in models.values()]}
                    )
                elif self.path == "/healthz":
                    body = b"ok"
                    self.send_response(200)
                    self.send_header("Content-Type", "text/plain")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                else:
                    self._send_json(
                        404, {"error": {"code": "not_found", "message": self.path}}
                    )

            def do_POST(self):
                if self.path != "/v1/invoke":
                    self._send_json(
                        404, {"error": {"code": "not_found", "message": self.path}}
                    )
                    return
                start = time.perf_counter()
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)

                def elapsed() -> int:
                    return int((time.perf_counter() - start) * 1000)

                try:
                    obj = json.loads(raw)
                    if not isinstance(obj, dict):
                        raise WireError("bad_request", "body must be a JSON object")
                except json.JSONDecodeError as exc:
                    self._send_json(
                        200,
                        _result(
                            "error", None, "", elapsed(),
                            error={"code": "bad_request", "message": str(exc)},
                        ),
                    )
                    return
                backend_id = obj.get("backend_id", "") if isinstance(obj, dict) else ""
                try:
                    output = _handle_request(obj, models)
                except WireError as exc:
                    self._send_json(
                        200,
                        _result(
                            "error", None, str(backend_id), elapsed(),
                            error={"code": exc.code, "message": exc.message},
                        ),
                    )
                    return
                self._send_json(
                    200, _result("ok", output, str(backend_id), elapsed())
                )

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

    def __enter__(self) -> "FmServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(models: Sequence[ServedModel] | None = None, port: int = 0) -> FmServer:
    return FmServer(models, port=port).start()
