import json
import random

import pytest

from eywa.backends import (
    BackendError,
    BackendRegistry,
    EchoChatBackend,
    InvocationRequest,
    InvocationResult,
    LastValueForecaster,
    LookupTabularPredictor,
    RelayChatBackend,
    ScriptedChatBackend,
    SeasonalNaiveForecaster,
    UsageRecord,
    adapt_response,
    compile_query,
    count_tokens_mock,
    decode_payload,
    decode_request,
    decode_result,
    default_mock_registry,
    encode_payload,
    encode_request,
    encode_result,
    invoke,
    registry_from_file,
)
from eywa.bench import Series, Table, parse_series_csv, serialize_series
from eywa.desk import desk_benchmark


def _series(values, start=0):
    return Series(points=tuple((str(start + i), float(v)) for i, v in enumerate(values)))


TABLE = Table(
    columns=("a", "b", "y"),
    rows=(("1", "2", "x"), ("3", "4", "__MASK__"), ("1", "2", "x"), ("5", "6", "__MASK__")),
    target_column="y",
    masked_rows=(1, 3),
)


class TestWireEncoding:
    def test_series_round_trip(self):
        s = _series([1.5, -2.0, 3.25])
        assert decode_payload(encode_payload(s)) == s

    def test_table_round_trip(self):
        assert decode_payload(encode_payload(TABLE)) == TABLE

    def test_messages_round_trip(self):
        msgs = [{"role": "user", "content": "hi"}]
        assert decode_payload(encode_payload(msgs)) == msgs

    def test_values_round_trip(self):
        assert decode_payload(encode_payload(["a", "b"])) == ["a", "b"]

    def test_text_round_trip(self):
        assert decode_payload(encode_payload("plain")) == "plain"

    def test_request_round_trip_through_json(self):
        request = InvocationRequest(
            backend_id="last-value",
            task_type="forecast",
            payload=_series([1, 2]),
            config={"horizon": 3},
        )
        wire = json.loads(json.dumps(encode_request(request)))
        assert decode_request(wire) == request

    def test_result_round_trip_through_json(self):
        result = InvocationResult(
            status="ok",
            output=_series([4.0]),
            usage=UsageRecord(3, 2, 7, "b"),
        )
        wire = json.loads(json.dumps(encode_result(result)))
        assert decode_result(wire) == result

    def test_error_result_round_trip(self):
        result = InvocationResult(
            status="error",
            usage=UsageRecord(0, 0, 1, "b"),
            error=("unknown_backend", "no such backend"),
        )
        assert decode_result(encode_result(result)) == result

    def test_missing_field_rejected(self):
        with pytest.raises(BackendError) as err:
            decode_request({"backend_id": "x", "task_type": "chat"})
        assert err.value.code == "bad_request"

    def test_unknown_payload_kind_rejected(self):
        with pytest.raises(BackendError):
            decode_payload({"kind": "hologram"})


class TestCountTokensMock:
    def test_whitespace_runs(self):
        assert count_tokens_mock("a b  c\nd\t e") == 5

    def test_empty(self):
        assert count_tokens_mock("") == 0
        assert count_tokens_mock("   \n ") == 0

    def test_serialized_series_token_count(self):
        # Header plus one token per point: a 1000-point series is 1001.
        series = _series(range(1000))
        assert count_tokens_mock(serialize_series(series)) == 1001


class TestForecastMocks:
    def test_last_value(self):
        result = invoke(
            InvocationRequest("last-value", "forecast", _series([1, 2, 7]), {"horizon": 3}),
            default_mock_registry(),
        )
        assert result.status == "ok"
        assert result.output.values == (7.0, 7.0, 7.0)
        assert result.output.timestamps == ("3", "4", "5")

    def test_seasonal_naive_period_two(self):
        result = invoke(
            InvocationRequest(
                "seasonal-naive", "forecast", _series([1, 9, 1, 9]), {"horizon": 3}
            ),
            default_mock_registry(),
        )
        assert result.output.values == (1.0, 9.0, 1.0)

    def test_seasonal_naive_explicit_period(self):
        result = invoke(
            InvocationRequest(
                "seasonal-naive",
                "forecast",
                _series([1, 2, 3]),
                {"horizon": 4, "period": 3},
            ),
            default_mock_registry(),
        )
        assert result.output.values == (1.0, 2.0, 3.0, 1.0)

    def test_missing_horizon_is_error(self):
        result = invoke(
            InvocationRequest("last-value", "forecast", _series([1]), {}),
            default_mock_registry(),
        )
        assert result.status == "error"
        assert result.error[0] == "backend"

    def test_deterministic_and_stateless(self):
        registry = default_mock_registry()
        request = InvocationRequest(
            "last-value", "forecast", _series([1, 2, 3]), {"horizon": 2}
        )
        first = invoke(request, registry)
        second = invoke(request, registry)
        assert first.output == second.output

    def test_non_integer_timestamps_fall_back(self):
        series = Series(points=(("jan", 1.0), ("feb", 2.0)))
        result = invoke(
            InvocationRequest("last-value", "forecast", series, {"horizon": 2}),
            default_mock_registry(),
        )
        assert result.output.timestamps == ("t2", "t3")


class TestLookupTabular:
    def test_exact_match_wins(self):
        result = invoke(
            InvocationRequest("lookup-tab", "tabular", TABLE, {}),
            default_mock_registry(),
        )
        # Row 1 features (3,4) are unseen -> majority fallback "x";
        # row 3 features (5,6) unseen too.
        assert result.output == ["x", "x"]

    def test_exact_feature_match(self):
        table = Table(
            columns=("f", "y"),
            rows=(("a", "1"), ("b", "2"), ("a", "__MASK__")),
            target_column="y",
            masked_rows=(2,),
        )
        result = invoke(
            InvocationRequest("lookup-tab", "tabular", table, {}),
            default_mock_registry(),
        )
        assert result.output == ["1"]

    def test_numeric_fallback_is_mean(self):
        table = Table(
            columns=("f", "y"),
            rows=(("a", "2"), ("b", "4"), ("c", "__MASK__")),
            target_column="y",
            masked_rows=(2,),
        )
        result = invoke(
            InvocationRequest("lookup-tab", "tabular", table, {}),
            default_mock_registry(),
        )
        assert result.output == ["3"]

    def test_no_masked_rows_is_error(self):
        table = Table(
            columns=("f", "y"), rows=(("a", "1"),), target_column="y"
        )
        result = invoke(
            InvocationRequest("lookup-tab", "tabular", table, {}),
            default_mock_registry(),
        )
        assert result.status == "error"


class TestChatMocks:
    def test_scripted_in_order_then_exhausted(self):
        backend = ScriptedChatBackend("s", ["one", "two"])
        registry = BackendRegistry([backend])
        request = InvocationRequest("s", "chat", [{"role": "user", "content": "x"}], {})
        assert invoke(request, registry).output == "one"
        assert invoke(request, registry).output == "two"
        assert invoke(request, registry).status == "error"
        backend.reset()
        assert invoke(request, registry).output == "one"

    def test_scripted_cycles(self):
        backend = ScriptedChatBackend("s", ["a"], cycle=True)
        registry = BackendRegistry([backend])
        request = InvocationRequest("s", "chat", [{"role": "user", "content": "x"}], {})
        assert [invoke(request, registry).output for _ in range(3)] == ["a", "a", "a"]

    def test_echo(self):
        registry = BackendRegistry([EchoChatBackend("e")])
        request = InvocationRequest(
            "e", "chat", [{"role": "user", "content": "hello there"}], {}
        )
        assert invoke(request, registry).output == "hello there"

    def test_relay_extracts_last_csv_block(self):
        prompt = (
            "context\n\ntimestamp,value\n0,1\n1,2\n\nmore text\n\n"
            "timestamp,value\n8,5\n9,6\n\ntrailing"
        )
        registry = BackendRegistry([RelayChatBackend("r")])
        request = InvocationRequest("r", "chat", [{"role": "user", "content": prompt}], {})
        assert invoke(request, registry).output == "timestamp,value\n8,5\n9,6"

    def test_relay_extracts_values_paragraph(self):
        prompt = "<table>\nstuff, with commas\n</table>\n\ninactive\nactive\n\n"
        registry = BackendRegistry([RelayChatBackend("r")])
        request = InvocationRequest("r", "chat", [{"role": "user", "content": prompt}], {})
        assert invoke(request, registry).output == "inactive\nactive"

    def test_relay_no_structured_data(self):
        registry = BackendRegistry([RelayChatBackend("r")])
        request = InvocationRequest(
            "r", "chat", [{"role": "user", "content": "just some <prose>, here"}], {}
        )
        assert invoke(request, registry).output == "no structured data available"


class TestInvokeAccounting:
    def test_chat_tokens_counted_both_ways(self):
        registry = BackendRegistry([ScriptedChatBackend("s", ["two words"])])
        request = InvocationRequest(
            "s", "chat", [{"role": "user", "content": "one two three"}], {}
        )
        result = invoke(request, registry)
        assert result.usage.input_tokens == 3
        assert result.usage.output_tokens == 2
        assert result.usage.backend_id == "s"

    def test_fm_calls_cost_zero_tokens(self):
        result = invoke(
            InvocationRequest(
                "last-value", "forecast", _series(range(500)), {"horizon": 5}
            ),
            default_mock_registry(),
        )
        assert result.usage.input_tokens == 0
        assert result.usage.output_tokens == 0

    def test_unknown_backend_still_yields_usage(self):
        result = invoke(
            InvocationRequest("ghost", "forecast", _series([1]), {"horizon": 1}),
            default_mock_registry(),
        )
        assert result.status == "error"
        assert result.error[0] == "unknown_backend"
        assert result.usage is not None

    def test_horizon_contract_enforced(self):
        class BadForecaster(LastValueForecaster):
            def handle(self, request):
                series = super().handle(request)
                return Series(points=series.points[:-1])

        registry = BackendRegistry([BadForecaster("bad")])
        result = invoke(
            InvocationRequest("bad", "forecast", _series([1, 2]), {"horizon": 3}),
            registry,
        )
        assert result.status == "error"
        assert "horizon" in result.error[1]


class _StateStub:
    def __init__(self, task, payloads, fm_config=None, content="prompt"):
        self.task = task
        self.parsed_payloads = payloads
        self.fm_config = fm_config or {}
        self._content = content

    def messages(self):
        return [{"role": "user", "content": self._content}]


class TestCompileQuery:
    def setup_method(self):
        self.registry = default_mock_registry()
        bench = desk_benchmark()
        self.forecast_task = next(t for t in bench if t.task == "forecast")
        self.tab_task = next(t for t in bench if t.task == "tab-classification")
        self.reg_task = next(t for t in bench if t.task == "tab-regression")

    def test_forecast_query(self):
        series = parse_series_csv(self.forecast_task.input)
        state = _StateStub(self.forecast_task, {"series": series})
        request = compile_query(state, self.registry.get("last-value").descriptor)
        assert request.task_type == "forecast"
        assert request.payload == series
        assert request.config["horizon"] == self.forecast_task.output_size

    def test_fm_config_overrides(self):
        series = parse_series_csv(self.forecast_task.input)
        state = _StateStub(self.forecast_task, {"series": series}, {"period": 4})
        request = compile_query(state, self.registry.get("seasonal-naive").descriptor)
        assert request.config["period"] == 4

    def test_tabular_query_kind(self):
        state = _StateStub(self.tab_task, {"table": TABLE})
        request = compile_query(state, self.registry.get("lookup-tab").descriptor)
        assert request.task_type == "tabular"
        assert request.config["kind"] == "classification"
        state = _StateStub(self.reg_task, {"table": TABLE})
        request = compile_query(state, self.registry.get("lookup-tab").descriptor)
        assert request.config["kind"] == "regression"

    def test_chat_query_carries_messages(self):
        state = _StateStub(self.forecast_task, {}, content="hello")
        request = compile_query(state, self.registry.get("scripted-llm").descriptor)
        assert request.task_type == "chat"
        assert request.payload == [{"role": "user", "content": "hello"}]

    def test_incompatible_payload_rejected(self):
        state = _StateStub(self.forecast_task, {})
        with pytest.raises(BackendError, match="series required"):
            compile_query(state, self.registry.get("last-value").descriptor)

    def test_round_trip_series_through_adapter(self):
        # serialize -> compile -> invoke -> adapt -> reparse is lossless.
        series = parse_series_csv(self.forecast_task.input)
        state = _StateStub(self.forecast_task, {"series": series})
        request = compile_query(state, self.registry.get("seasonal-naive").descriptor)
        result = invoke(request, self.registry)
        context = adapt_response(result)
        reparsed = parse_series_csv(context.text_block)
        assert reparsed == result.output


class TestAdaptResponse:
    def _ok(self, output, backend_id="b"):
        return InvocationResult(
            status="ok", output=output, usage=UsageRecord(0, 0, 0, backend_id)
        )

    def test_series_rendered_as_csv(self):
        context = adapt_response(self._ok(_series([1, 2.5])))
        assert context.text_block == "timestamp,value\n0,1\n1,2.5"
        assert context.provenance.startswith("b:")

    def test_list_rendered_one_per_line(self):
        assert adapt_response(self._ok(["x", "y"])).text_block == "x\ny"

    def test_string_verbatim(self):
        assert adapt_response(self._ok("hello")).text_block == "hello"

    def test_truncation_marker(self):
        context = adapt_response(self._ok("a" * 5000), budget=100)
        assert context.text_block.startswith("a" * 100)
        assert "truncated 4900 chars" in context.text_block

    def test_failed_result_rejected(self):
        bad = InvocationResult(status="error", error=("backend", "boom"))
        with pytest.raises(BackendError):
            adapt_response(bad)


class TestRegistry:
    def test_duplicate_id_rejected(self):
        with pytest.raises(BackendError, match="duplicate"):
            BackendRegistry([EchoChatBackend("e"), EchoChatBackend("e")])

    def test_by_kind(self):
        registry = default_mock_registry()
        assert registry.by_kind("chat-llm") == ["scripted-llm"]
        assert set(registry.by_kind("ts-fm")) == {"last-value", "seasonal-naive"}
        assert registry.by_kind("tab-fm") == ["lookup-tab"]

    def test_descriptors_cover_all(self):
        registry = default_mock_registry()
        ids = {d.backend_id for d in registry.descriptors()}
        assert ids == {"scripted-llm", "last-value", "seasonal-naive", "lookup-tab"}

    def test_from_file(self, tmp_path):
        spec = {
            "backends": [
                {"type": "scripted", "backend_id": "s", "replies": ["hi"]},
                {"type": "seasonal-naive", "backend_id": "sn", "period": 3},
                {"type": "lookup-tab", "backend_id": "lt"},
            ]
        }
        path = tmp_path / "registry.json"
        path.write_text(json.dumps(spec), encoding="utf-8")
        registry = registry_from_file(str(path))
        assert "s" in registry and "sn" in registry and "lt" in registry
        assert registry.get("sn").default_period == 3

    def test_from_file_unknown_type(self, tmp_path):
        path = tmp_path / "registry.json"
        path.write_text(json.dumps({"backends": [{"type": "quantum"}]}))
        with pytest.raises(BackendError, match="unknown backend type"):
            registry_from_file(str(path))


def test_seasonal_naive_random_property():
    # Forecast values always come from the last `period` observations.
    rng = random.Random(43)
    backend = SeasonalNaiveForecaster("sn")
    registry = BackendRegistry([backend])
    for _ in range(100):
        n = rng.randint(2, 20)
        period = rng.randint(1, n)
        horizon = rng.randint(1, 6)
        values = [round(rng.uniform(-5, 5), 3) for _ in range(n)]
        result = invoke(
            InvocationRequest(
                "sn", "forecast", _series(values), {"horizon": horizon, "period": period}
            ),
            registry,
        )
        season = values[-period:]
        assert list(result.output.values) == [season[i % period] for i in range(horizon)]
