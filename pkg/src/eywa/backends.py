"""Invocation protocol: typed requests/results, query compiler and
response adapter, mock backends, remote clients, and usage accounting.

The wire contract is JSON over HTTP: ``POST /v1/invoke`` with
``{"backend_id", "task_type", "payload", "config"}`` and
``GET /v1/describe`` returning the descriptor list.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from collections import Counter
from dataclasses import dataclass, field
from statistics import fmean
from typing import Sequence

import requests

from eywa.bench import (
    Series,
    Table,
    TASK_FORECAST,
    TASK_NL,
    TASK_TAB_CLS,
    TASK_TAB_REG,
    format_number,
    serialize_series,
)

ADAPTER_BUDGET = 4096
TRANSPORT_TIMEOUT_S = 60.0

KIND_CHAT = "chat-llm"
KIND_TS = "ts-fm"
KIND_TAB = "tab-fm"


class BackendError(Exception):
    """Structured backend failure with a machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    kind: str
    capabilities: tuple[str, ...]
    endpoint: str | None = None
    description: str = ""

    def to_json(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "kind": self.kind,
            "capabilities": list(self.capabilities),
            "endpoint": self.endpoint,
            "description": self.description,
        }

    @staticmethod
    def from_json(obj: dict) -> "BackendDescriptor":
        return BackendDescriptor(
            backend_id=obj["backend_id"],
            kind=obj["kind"],
            capabilities=tuple(obj.get("capabilities", ())),
            endpoint=obj.get("endpoint"),
            description=obj.get("description", ""),
        )


@dataclass(frozen=True)
class UsageRecord:
    input_tokens: int
    output_tokens: int
    wall_clock_ms: int
    backend_id: str


@dataclass(frozen=True)
class InvocationRequest:
    backend_id: str
    task_type: str  # forecast | tabular | chat
    payload: object  # Series | Table | list of message dicts
    config: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InvocationResult:
    status: str  # ok | error
    output: object = None  # Series | list of values | str
    usage: UsageRecord | None = None
    error: tuple[str, str] | None = None


@dataclass(frozen=True)
class AdaptedContext:
    text_block: str
    provenance: str


def count_tokens_mock(text: str) -> int:
    """Deterministic token count: number of non-whitespace runs."""
    return len(text.split())


# ---------------------------------------------------------------------------
# Wire encoding


def encode_payload(payload: object) -> dict:
    if isinstance(payload, Series):
        return {
            "kind": "series",
            "timestamps": list(payload.timestamps),
            "values": list(payload.values),
        }
    if isinstance(payload, Table):
        return {
            "kind": "table",
            "columns": list(payload.columns),
            "rows": [list(r) for r in payload.rows],
            "target_column": payload.target_column,
            "masked_rows": list(payload.masked_rows),
        }
    if isinstance(payload, (list, tuple)):
        if payload and isinstance(payload[0], dict):
            return {"kind": "messages", "messages": list(payload)}
        return {"kind": "values", "values": list(payload)}
    if isinstance(payload, str):
        return {"kind": "text", "text": payload}
    raise BackendError("bad_request", f"unencodable payload {type(payload).__name__}")


def decode_payload(obj: dict) -> object:
    kind = obj.get("kind")
    if kind == "series":
        return Series(
            points=tuple(
                (str(t), float(v))
                for t, v in zip(obj["timestamps"], obj["values"])
            )
        )
    if kind == "table":
        return Table(
            columns=tuple(obj["columns"]),
            rows=tuple(tuple(str(c) for c in r) for r in obj["rows"]),
            target_column=obj["target_column"],
            masked_rows=tuple(obj["masked_rows"]),
        )
    if kind == "messages":
        return list(obj["messages"])
    if kind == "values":
        return list(obj["values"])
    if kind == "text":
        return obj["text"]
    raise BackendError("bad_request", f"unknown payload kind {kind!r}")


def encode_request(request: InvocationRequest) -> dict:
    return {
        "backend_id": request.backend_id,
        "task_type": request.task_type,
        "payload": encode_payload(request.payload),
        "config": dict(request.config),
    }


def decode_request(obj: dict) -> InvocationRequest:
    for name in ("backend_id", "task_type", "payload"):
        if name not in obj:
            raise BackendError("bad_request", f"missing field {name!r}")
    return InvocationRequest(
        backend_id=obj["backend_id"],
        task_type=obj["task_type"],
        payload=decode_payload(obj["payload"]),
        config=dict(obj.get("config", {})),
    )


def encode_result(result: InvocationResult) -> dict:
    usage = result.usage
    return {
        "status": result.status,
        "output": encode_payload(result.output) if result.output is not None else None,
        "usage": {
            "input_tokens": usage.input_tokens if usage else 0,
            "output_tokens": usage.output_tokens if usage else 0,
            "wall_clock_ms": usage.wall_clock_ms if usage else 0,
            "backend_id": usage.backend_id if usage else "",
        },
        "error": (
            {"code": result.error[0], "message": result.error[1]}
            if result.error
            else None
        ),
    }


def decode_result(obj: dict) -> InvocationResult:
    usage_obj = obj.get("usage") or {}
    usage = UsageRecord(
        input_tokens=int(usage_obj.get("input_tokens", 0)),
        output_tokens=int(usage_obj.get("output_tokens", 0)),
        wall_clock_ms=int(usage_obj.get("wall_clock_ms", 0)),
        backend_id=usage_obj.get("backend_id", ""),
    )
    error_obj = obj.get("error")
    error = (error_obj["code"], error_obj["message"]) if error_obj else None
    output = decode_payload(obj["output"]) if obj.get("output") is not None else None
    return InvocationResult(
        status=obj["status"], output=output, usage=usage, error=error
    )


# ---------------------------------------------------------------------------
# Backends


class Backend:
    """A callable model behind the invocation protocol."""

    descriptor: BackendDescriptor

    def handle(self, request: InvocationRequest) -> object:
        raise NotImplementedError


def _continue_timestamps(series: Series, horizon: int) -> list[str]:
    # Integer timestamps continue arithmetically; anything else falls
    # back to positional indices.
    try:
        last = int(series.timestamps[-1])
        step = 1
        if len(series) >= 2:
            step = int(series.timestamps[-1]) - int(series.timestamps[-2]) or 1
        return [str(last + step * (i + 1)) for i in range(horizon)]
    except ValueError:
        start = len(series)
        return [f"t{start + i}" for i in range(horizon)]


def _require_horizon(request: InvocationRequest) -> int:
    horizon = request.config.get("horizon")
    if not isinstance(horizon, int) or horizon < 1:
        raise BackendError("backend", "config.horizon must be an integer >= 1")
    return horizon


class LastValueForecaster(Backend):
    """Persistence forecast: repeats the final observed value."""

    def __init__(self, backend_id: str = "last-value"):
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            kind=KIND_TS,
            capabilities=(TASK_FORECAST,),
            description="repeats the last observed value",
        )

    def handle(self, request: InvocationRequest) -> Series:
        series = request.payload
        if not isinstance(series, Series):
            raise BackendError("backend", "forecast payload must be a series")
        horizon = _require_horizon(request)
        stamps = _continue_timestamps(series, horizon)
        last = series.values[-1]
        return Series(points=tuple((t, last) for t in stamps))


class SeasonalNaiveForecaster(Backend):
    """Repeats the last full period of the configured length."""

    def __init__(self, backend_id: str = "seasonal-naive", period: int = 2):
        self.default_period = period
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            kind=KIND_TS,
            capabilities=(TASK_FORECAST,),
            description=f"repeats the last period (default length {period})",
        )

    def handle(self, request: InvocationRequest) -> Series:
        series = request.payload
        if not isinstance(series, Series):
            raise BackendError("backend", "forecast payload must be a series")
        horizon = _require_horizon(request)
        period = int(request.config.get("period", self.default_period))
        if period < 1 or period > len(series):
            raise BackendError("backend", f"invalid period {period}")
        season = series.values[-period:]
        stamps = _continue_timestamps(series, horizon)
        values = [season[i % period] for i in range(horizon)]
        return Series(points=tuple(zip(stamps, values)))


class LookupTabularPredictor(Backend):
    """Nearest-row tabular predictor: exact feature match wins, else the
    majority (labels) or mean (numbers) of the observed targets."""

    def __init__(self, backend_id: str = "lookup-tab"):
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            kind=KIND_TAB,
            capabilities=(TASK_TAB_CLS, TASK_TAB_REG),
            description="exact-match lookup with majority/mean fallback",
        )

    def handle(self, request: InvocationRequest) -> list[str]:
        table = request.payload
        if not isinstance(table, Table):
            raise BackendError("backend", "tabular payload must be a table")
        if not table.masked_rows:
            raise BackendError("backend", "no masked rows to predict")
        observed = table.observed_targets()
        if not observed:
            raise BackendError("backend", "no observed target rows")
        fallback = self._fallback(observed)
        ti = table.target_index
        masked = set(table.masked_rows)
        features = {}
        for i, row in enumerate(table.rows):
            if i not in masked:
                key = tuple(c for j, c in enumerate(row) if j != ti)
                features.setdefault(key, row[ti])
        predictions = []
        for i in table.masked_rows:
            key = tuple(c for j, c in enumerate(table.rows[i]) if j != ti)
            predictions.append(features.get(key, fallback))
        return predictions

    @staticmethod
    def _fallback(observed: Sequence[str]) -> str:
        try:
            return format_number(fmean(float(v) for v in observed))
        except ValueError:
            return Counter(observed).most_common(1)[0][0]


class ScriptedChatBackend(Backend):
    """Replays a fixed, ordered list of replies.  The reply cursor is the
    only mutable state; token counts stay deterministic per call."""

    def __init__(self, backend_id: str, replies: Sequence[str], cycle: bool = False):
        self.replies = list(replies)
        self.cycle = cycle
        self._cursor = 0
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            kind=KIND_CHAT,
            capabilities=(TASK_NL, TASK_FORECAST, TASK_TAB_CLS, TASK_TAB_REG),
            description="scripted chat model for deterministic tests",
        )

    def reset(self) -> None:
        self._cursor = 0

    def handle(self, request: InvocationRequest) -> str:
        if self._cursor >= len(self.replies):
            if not self.cycle:
                raise BackendError("backend", "scripted replies exhausted")
            self._cursor = 0
        reply = self.replies[self._cursor]
        self._cursor += 1
        return reply


class EchoChatBackend(Backend):
    """Replies with the concatenated message contents it was sent."""

    def __init__(self, backend_id: str = "echo-llm"):
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            kind=KIND_CHAT,
            capabilities=(TASK_NL, TASK_FORECAST, TASK_TAB_CLS, TASK_TAB_REG),
            description="echoes its input",
        )

    def handle(self, request: InvocationRequest) -> str:
        messages = request.payload
        return "\n".join(m.get("content", "") for m in messages)


class RelayChatBackend(Backend):
    """Extracts the last ``timestamp,value`` CSV block or value-list block
    from its input and returns it verbatim; the deterministic stand-in
    for a model that forwards an attached specialist's output."""

    def __init__(self, backend_id: str = "relay-llm"):
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            kind=KIND_CHAT,
            capabilities=(TASK_NL, TASK_FORECAST, TASK_TAB_CLS, TASK_TAB_REG),
            description="relays the most recent structured block in context",
        )

    def handle(self, request: InvocationRequest) -> str:
        messages = request.payload
        text = "\n".join(m.get("content", "") for m in messages)
        block = _last_csv_block(text)
        if block is not None:
            return block
        block = _last_values_paragraph(text)
        if block is not None:
            return block
        return "no structured data available"


def _last_csv_block(text: str) -> str | None:
    lines = text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if line.strip() == "timestamp,value":
            start = i
    if start is None:
        return None
    block = [lines[start].strip()]
    for line in lines[start + 1 :]:
        stripped = line.strip()
        if "," in stripped and len(stripped.split(",")) == 2:
            block.append(stripped)
        else:
            break
    return "\n".join(block) if len(block) > 1 else None


def _last_values_paragraph(text: str) -> str | None:
    # A bare value list: every line a single whitespace-free token, no
    # markup.  Matches the tabular adapter's one-value-per-line format.
    for paragraph in reversed(text.split("\n\n")):
        lines = [ln.strip() for ln in paragraph.splitlines() if ln.strip()]
        if lines and all(
            len(ln.split()) == 1 and "<" not in ln and "," not in ln for ln in lines
        ):
            return "\n".join(lines)
    return None


class OpenAIStyleChatBackend(Backend):
    """Optional real chat backend speaking an OpenAI-style
    chat-completions JSON shape.  Configured via EYWA_LLM_BASE_URL and
    EYWA_LLM_API_KEY."""

    def __init__(
        self,
        backend_id: str = "llm",
        model: str = "gpt-5-nano",
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = TRANSPORT_TIMEOUT_S,
    ):
        self.model = model
        self.base_url = (base_url or os.environ.get("EYWA_LLM_BASE_URL", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("EYWA_LLM_API_KEY", "")
        self.timeout = timeout
        if not self.base_url:
            raise BackendError("backend", "EYWA_LLM_BASE_URL is not set")
        self.descriptor = BackendDescriptor(
            backend_id=backend_id,
            kind=KIND_CHAT,
            capabilities=(TASK_NL, TASK_FORECAST, TASK_TAB_CLS, TASK_TAB_REG),
            endpoint=self.base_url,
            description=f"chat-completions model {model}",
        )
        self.last_usage: tuple[int, int] | None = None

    def handle(self, request: InvocationRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model, "messages": request.payload}
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendError("transport", str(exc)) from None
        if resp.status_code != 200:
            raise BackendError("backend", f"HTTP {resp.status_code}: {resp.text[:200]}")
        data = resp.json()
        usage = data.get("usage", {})
        self.last_usage = (
            int(usage.get("prompt_tokens", 0)),
            int(usage.get("completion_tokens", 0)),
        )
        return data["choices"][0]["message"]["content"]


class RemoteBackend(Backend):
    """Client for a backend served behind the `/v1/invoke` contract."""

    def __init__(
        self,
        descriptor: BackendDescriptor,
        timeout: float = TRANSPORT_TIMEOUT_S,
        bearer_token: str | None = None,
    ):
        if not descriptor.endpoint:
            raise BackendError("bad_request", "remote backend needs an endpoint")
        self.descriptor = descriptor
        self.timeout = timeout
        self.bearer_token = bearer_token
        self.last_result: InvocationResult | None = None

    def handle(self, request: InvocationRequest) -> object:
        headers = {"Content-Type": "application/json"}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        url = self.descriptor.endpoint.rstrip("/") + "/v1/invoke"
        try:
            resp = requests.post(
                url, json=encode_request(request), headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendError("transport", str(exc)) from None
        try:
            result = decode_result(resp.json())
        except (ValueError, KeyError) as exc:
            raise BackendError("transport", f"undecodable response: {exc}") from None
        self.last_result = result
        if result.status != "ok":
            code, message = result.error or ("backend", "remote error")
            raise BackendError(code, message)
        return result.output


class BackendRegistry:
    """Immutable-after-startup lookup from backend_id to Backend."""

    def __init__(self, backends: Sequence[Backend] = ()):
        self._backends: dict[str, Backend] = {}
        for backend in backends:
            self.register(backend)

    def register(self, backend: Backend) -> None:
        bid = backend.descriptor.backend_id
        if bid in self._backends:
            raise BackendError("bad_request", f"duplicate backend_id {bid!r}")
        self._backends[bid] = backend

    def get(self, backend_id: str) -> Backend:
        if backend_id not in self._backends:
            raise BackendError("unknown_backend", f"unknown backend {backend_id!r}")
        return self._backends[backend_id]

    def __contains__(self, backend_id: str) -> bool:
        return backend_id in self._backends

    def descriptors(self) -> list[BackendDescriptor]:
        return [b.descriptor for b in self._backends.values()]

    def by_kind(self, kind: str) -> list[str]:
        return [
            b.descriptor.backend_id
            for b in self._backends.values()
            if b.descriptor.kind == kind
        ]


def _request_tokens(request: InvocationRequest) -> int:
    if request.task_type == "chat":
        return sum(
            count_tokens_mock(m.get("content", "")) for m in request.payload
        )
    return 0


def _output_tokens(request: InvocationRequest, output: object) -> int:
    if request.task_type == "chat" and isinstance(output, str):
        return count_tokens_mock(output)
    return 0


def invoke(request: InvocationRequest, registry: BackendRegistry) -> InvocationResult:
    """Dispatch a request to its backend; every call, success or failure,
    yields exactly one UsageRecord.  Token counts attach to chat calls
    only; specialist-model calls cost no language tokens."""
    start = time.perf_counter()

    def usage(output_tokens: int = 0) -> UsageRecord:
        return UsageRecord(
            input_tokens=_request_tokens(request),
            output_tokens=output_tokens,
            wall_clock_ms=int((time.perf_counter() - start) * 1000),
            backend_id=request.backend_id,
        )

    try:
        backend = registry.get(request.backend_id)
    except BackendError as exc:
        return InvocationResult(status="error", usage=usage(), error=(exc.code, exc.message))

    if isinstance(backend, OpenAIStyleChatBackend):
        try:
            output = backend.handle(request)
        except BackendError as exc:
            return InvocationResult(status="error", usage=usage(), error=(exc.code, exc.message))
        in_tok, out_tok = backend.last_usage or (0, 0)
        record = UsageRecord(
            input_tokens=in_tok,
            output_tokens=out_tok,
            wall_clock_ms=int((time.perf_counter() - start) * 1000),
            backend_id=request.backend_id,
        )
        return InvocationResult(status="ok", output=output, usage=record)

    if isinstance(backend, RemoteBackend):
        try:
            output = backend.handle(request)
        except BackendError as exc:
            return InvocationResult(status="error", usage=usage(), error=(exc.code, exc.message))
        remote = backend.last_result
        record = UsageRecord(
            input_tokens=remote.usage.input_tokens if remote and remote.usage else 0,
            output_tokens=remote.usage.output_tokens if remote and remote.usage else 0,
            wall_clock_ms=int((time.perf_counter() - start) * 1000),
            backend_id=request.backend_id,
        )
        return InvocationResult(status="ok", output=output, usage=record)

    try:
        output = backend.handle(request)
    except BackendError as exc:
        return InvocationResult(status="error", usage=usage(), error=(exc.code, exc.message))
    if request.task_type == "forecast" and isinstance(output, Series):
        horizon = request.config.get("horizon")
        if isinstance(horizon, int) and len(output) != horizon:
            return InvocationResult(
                status="error",
                usage=usage(),
                error=("backend", f"forecast length {len(output)} != horizon {horizon}"),
            )
    return InvocationResult(
        status="ok", output=output, usage=usage(_output_tokens(request, output))
    )


def compile_query(state, target: BackendDescriptor) -> InvocationRequest:
    """Translate an agent's task state into a schema-valid request for
    the target backend.  Deterministic for identical state."""
    payloads = state.parsed_payloads
    task = state.task
    if target.kind == KIND_TS:
        series = payloads.get("series")
        if series is None:
            raise BackendError("bad_request", "no compatible payload: series required")
        config = {"horizon": task.output_size}
        config.update(state.fm_config)
        return InvocationRequest(
            backend_id=target.backend_id,
            task_type="forecast",
            payload=series,
            config=config,
        )
    if target.kind == KIND_TAB:
        table = payloads.get("table")
        if table is None:
            raise BackendError("bad_request", "no compatible payload: table required")
        kind = "classification" if task.task == TASK_TAB_CLS else "regression"
        config = {"target_column": table.target_column, "kind": kind}
        config.update(state.fm_config)
        return InvocationRequest(
            backend_id=target.backend_id,
            task_type="tabular",
            payload=table,
            config=config,
        )
    if target.kind == KIND_CHAT:
        return InvocationRequest(
            backend_id=target.backend_id,
            task_type="chat",
            payload=state.messages(),
            config={},
        )
    raise BackendError("bad_request", f"unknown backend kind {target.kind!r}")


def adapt_response(result: InvocationResult, budget: int = ADAPTER_BUDGET) -> AdaptedContext:
    """Render a successful result into a bounded text block the chat
    model can read."""
    if result.status != "ok":
        raise BackendError("bad_request", "cannot adapt failed invocation")
    output = result.output
    if isinstance(output, Series):
        text = serialize_series(output)
    elif isinstance(output, (list, tuple)):
        text = "\n".join(str(v) for v in output)
    elif isinstance(output, str):
        text = output
    else:
        raise BackendError("bad_request", f"unadaptable output {type(output).__name__}")
    if len(text) > budget:
        dropped = len(text) - budget
        text = text[:budget] + f"…[truncated {dropped} chars]"
    backend_id = result.usage.backend_id if result.usage else ""
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
    return AdaptedContext(text_block=text, provenance=f"{backend_id}:{digest}")


def default_mock_registry(scripted_replies: Sequence[str] = ("ok",)) -> BackendRegistry:
    """The four bundled mocks behind one registry."""
    return BackendRegistry(
        [
            ScriptedChatBackend("scripted-llm", scripted_replies),
            LastValueForecaster("last-value"),
            SeasonalNaiveForecaster("seasonal-naive"),
            LookupTabularPredictor("lookup-tab"),
        ]
    )


def registry_from_file(path: str) -> BackendRegistry:
    """Build a registry from a JSON file listing backend definitions."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    factories = {
        "scripted": lambda e: ScriptedChatBackend(
            e["backend_id"], e.get("replies", ["ok"]), cycle=e.get("cycle", True)
        ),
        "echo": lambda e: EchoChatBackend(e["backend_id"]),
        "relay": lambda e: RelayChatBackend(e["backend_id"]),
        "last-value": lambda e: LastValueForecaster(e["backend_id"]),
        "seasonal-naive": lambda e: SeasonalNaiveForecaster(
            e["backend_id"], period=e.get("period", 2)
        ),
        "lookup-tab": lambda e: LookupTabularPredictor(e["backend_id"]),
        "openai-chat": lambda e: OpenAIStyleChatBackend(
            e["backend_id"], model=e.get("model", "gpt-5-nano")
        ),
        "remote": lambda e: RemoteBackend(
            BackendDescriptor(
                backend_id=e["backend_id"],
                kind=e["kind"],
                capabilities=tuple(e.get("capabilities", ())),
                endpoint=e["endpoint"],
            )
        ),
    }
    registry = BackendRegistry()
    for entry in spec.get("backends", []):
        kind = entry.get("type")
        if kind not in factories:
            raise BackendError("bad_request", f"unknown backend type {kind!r}")
        registry.register(factories[kind](entry))
    return registry
