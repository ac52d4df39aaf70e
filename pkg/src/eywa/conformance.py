"""Protocol conformance checks, shared by the bundled mock server's
tests and any external server implementing the same wire contract."""

from __future__ import annotations

import requests

from eywa.backends import (
    InvocationRequest,
    decode_result,
    encode_request,
)
from eywa.bench import Series, Table

RESULT_FIELDS = ("status", "output", "usage", "error")
USAGE_FIELDS = ("input_tokens", "output_tokens", "wall_clock_ms", "backend_id")
DESCRIPTOR_FIELDS = ("backend_id", "kind", "capabilities")


def post_invoke(base_url: str, request: InvocationRequest, timeout: float = 30.0) -> dict:
    resp = requests.post(
        base_url.rstrip("/") + "/v1/invoke",
        json=encode_request(request),
        timeout=timeout,
    )
    assert resp.status_code == 200, f"/v1/invoke HTTP {resp.status_code}"
    return resp.json()


def check_describe(base_url: str, timeout: float = 30.0) -> list[dict]:
    resp = requests.get(base_url.rstrip("/") + "/v1/describe", timeout=timeout)
    assert resp.status_code == 200, f"/v1/describe HTTP {resp.status_code}"
    body = resp.json()
    assert "backends" in body, "describe body missing 'backends'"
    for descriptor in body["backends"]:
        for name in DESCRIPTOR_FIELDS:
            assert name in descriptor, f"descriptor missing {name!r}"
    return body["backends"]


def check_result_shape(obj: dict) -> None:
    for name in RESULT_FIELDS:
        assert name in obj, f"result missing field {name!r}"
    assert obj["status"] in ("ok", "error"), f"bad status {obj['status']!r}"
    for name in USAGE_FIELDS:
        assert name in obj["usage"], f"usage missing field {name!r}"
    if obj["status"] == "ok":
        assert obj["output"] is not None, "ok result without output"
        assert obj["error"] is None, "ok result with error"
    else:
        assert obj["error"] is not None, "error result without error"
        assert "code" in obj["error"] and "message" in obj["error"]


def check_forecast_contract(
    base_url: str, backend_id: str, series: Series, horizon: int, config: dict | None = None
) -> Series:
    request = InvocationRequest(
        backend_id=backend_id,
        task_type="forecast",
        payload=series,
        config={"horizon": horizon, **(config or {})},
    )
    obj = post_invoke(base_url, request)
    check_result_shape(obj)
    assert obj["status"] == "ok", f"forecast failed: {obj['error']}"
    result = decode_result(obj)
    assert isinstance(result.output, Series)
    assert len(result.output) == horizon, (
        f"forecast length {len(result.output)} != horizon {horizon}"
    )
    return result.output


def check_tabular_contract(
    base_url: str, backend_id: str, table: Table, config: dict | None = None
) -> list:
    request = InvocationRequest(
        backend_id=backend_id,
        task_type="tabular",
        payload=table,
        config={"target_column": table.target_column, **(config or {})},
    )
    obj = post_invoke(base_url, request)
    check_result_shape(obj)
    assert obj["status"] == "ok", f"tabular prediction failed: {obj['error']}"
    result = decode_result(obj)
    assert isinstance(result.output, list)
    assert len(result.output) == len(table.masked_rows), (
        f"{len(result.output)} predictions for {len(table.masked_rows)} masked rows"
    )
    return result.output


def check_error_contract(base_url: str, timeout: float = 30.0) -> None:
    # Malformed body must come back as a structured bad_request error.
    resp = requests.post(
        base_url.rstrip("/") + "/v1/invoke", json={"nope": 1}, timeout=timeout
    )
    assert resp.status_code == 200
    obj = resp.json()
    check_result_shape(obj)
    assert obj["status"] == "error"
    assert obj["error"]["code"] == "bad_request", obj["error"]

    request = InvocationRequest(
        backend_id="no-such-backend",
        task_type="forecast",
        payload=Series(points=(("0", 1.0),)),
        config={"horizon": 1},
    )
    obj = post_invoke(base_url, request, timeout=timeout)
    check_result_shape(obj)
    assert obj["status"] == "error"
    assert obj["error"]["code"] == "unknown_backend", obj["error"]


def run_conformance(
    base_url: str,
    forecast_backend: str | None = None,
    tabular_backend: str | None = None,
) -> None:
    """Full suite against a live server; raises AssertionError on the
    first violated contract."""
    descriptors = check_describe(base_url)
    ids = {d["backend_id"]: d for d in descriptors}
    if forecast_backend is None:
        forecast_backend = next(
            (bid for bid, d in ids.items() if d["kind"] == "ts-fm"), None
        )
    if tabular_backend is None:
        tabular_backend = next(
            (bid for bid, d in ids.items() if d["kind"] == "tab-fm"), None
        )
    series = Series(points=tuple((str(i), float(v)) for i, v in enumerate([1, 2, 1, 2])))
    if forecast_backend:
        check_forecast_contract(base_url, forecast_backend, series, horizon=3)
    if tabular_backend:
        table = Table(
            columns=("a", "y"),
            rows=(("1", "2"), ("2", "4"), ("3", "__MASK__")),
            target_column="y",
            masked_rows=(2,),
        )
        check_tabular_contract(base_url, tabular_backend, table)
    check_error_contract(base_url)
