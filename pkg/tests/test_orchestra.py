import itertools
import json

import pytest

from eywa.backends import (
    BackendRegistry,
    LastValueForecaster,
    RelayChatBackend,
    ScriptedChatBackend,
    SeasonalNaiveForecaster,
)
from eywa.desk import desk_benchmark
from eywa.harness import score_outcome
from eywa.orchestra import (
    ConfigError,
    ConfigSpace,
    OrchestraConfig,
    default_fallback_config,
    instantiate,
    oracle_conductor,
    parse_and_validate_config,
    render_planner_prompt,
    run_orchestra,
)

BENCH = desk_benchmark()
NL_TASK = BENCH.instances[0]
FLAT_FORECAST = BENCH.instances[4]
ALT_FORECAST = BENCH.instances[5]
TREND_FORECAST = BENCH.instances[6]

SPACE = ConfigSpace(llm_pool=("relay-llm",), fm_pool=("last-value", "seasonal-naive"))

VALID_AGENT = {
    "agent_id": "agent-0",
    "role_prompt": "",
    "model": "relay-llm",
    "eywa": False,
    "foundation_model": None,
}


def _reply(setting, model, mat, fm, agents, eywa=None):
    return json.dumps(
        {
            "eywa": bool(fm) if eywa is None else eywa,
            "setting": setting,
            "model": model,
            "multi_agent_type": mat,
            "foundation_model": fm,
            "agents": agents,
        }
    )


def _scorer(task, outcome):
    return score_outcome(task, outcome)[0].value


class TestPlannerPrompt:
    def test_contains_pools_task_constraints_schema(self):
        registry = BackendRegistry(
            [RelayChatBackend("relay-llm"), LastValueForecaster("last-value"),
             SeasonalNaiveForecaster("seasonal-naive")]
        )
        text = render_planner_prompt(NL_TASK, SPACE, registry)
        assert "- relay-llm" in text
        assert "- last-value" in text and "- seasonal-naive" in text
        for topo in SPACE.topology_pool:
            assert f"- {topo}" in text
        assert f"Task Description: {NL_TASK.description}" in text
        assert f"Domain: {NL_TASK.domain}" in text
        assert f"Task Type: {NL_TASK.task}" in text
        assert "Hard constraints:" in text
        assert '"multi_agent_type"' in text

    def test_empty_pool_rejected(self):
        with pytest.raises(ConfigError, match="empty pool"):
            render_planner_prompt(NL_TASK, ConfigSpace(llm_pool=(), fm_pool=("f",)))


class TestValidationMatrix:
    MODELS = ("relay-llm", "ghost", None)
    TYPES = ("refine", "ring", None)
    FMS = ("last-value", "ghost-fm", None)
    AGENTS = ((), (VALID_AGENT,))

    def _legal(self, setting, model, mat, fm, agents):
        if fm == "ghost-fm":
            return False
        if setting == "single-agent":
            return model == "relay-llm" and mat is None and agents == ()
        return model is None and mat == "refine" and agents != ()

    def test_exactly_four_of_108_combinations_are_legal(self):
        total = accepted = 0
        for setting, model, mat, fm, agents in itertools.product(
            ("single-agent", "multi-agent"),
            self.MODELS,
            self.TYPES,
            self.FMS,
            self.AGENTS,
        ):
            total += 1
            reply = _reply(setting, model, mat, fm, list(agents))
            try:
                parse_and_validate_config(reply, SPACE)
                ok = True
            except ConfigError:
                ok = False
            assert ok == self._legal(setting, model, mat, fm, agents), (
                setting, model, mat, fm, agents,
            )
            accepted += ok
        assert total == 108
        assert accepted == 4

    def test_missing_and_extra_fields_rejected(self):
        obj = json.loads(_reply("single-agent", "relay-llm", None, None, []))
        del obj["agents"]
        with pytest.raises(ConfigError, match="missing fields"):
            parse_and_validate_config(json.dumps(obj), SPACE)
        obj["agents"] = []
        obj["comment"] = "hi"
        with pytest.raises(ConfigError, match="unknown fields"):
            parse_and_validate_config(json.dumps(obj), SPACE)

    def test_non_json_rejected(self):
        with pytest.raises(ConfigError, match="not valid JSON"):
            parse_and_validate_config("pick the debate one", SPACE)

    def test_single_fenced_block_tolerated(self):
        reply = "```json\n" + _reply("single-agent", "relay-llm", None, None, []) + "\n```"
        config = parse_and_validate_config(reply, SPACE)
        assert config.model == "relay-llm"

    def test_agent_spec_validation(self):
        bad = dict(VALID_AGENT, model="ghost")
        with pytest.raises(ConfigError, match=r"agents\[0\].model"):
            parse_and_validate_config(
                _reply("multi-agent", None, "refine", None, [bad]), SPACE
            )
        bad = dict(VALID_AGENT, eywa=True)
        with pytest.raises(ConfigError, match="eywa=true but no foundation_model"):
            parse_and_validate_config(
                _reply("multi-agent", None, "refine", None, [bad]), SPACE
            )

    def test_case_study_shaped_config(self):
        agents = [
            {
                "agent_id": "forecaster",
                "role_prompt": "You produce the forecast.",
                "model": "relay-llm",
                "eywa": True,
                "foundation_model": "seasonal-naive",
            },
            {
                "agent_id": "reviewer",
                "role_prompt": "You check the forecast.",
                "model": "relay-llm",
                "eywa": False,
                "foundation_model": None,
            },
        ]
        reply = _reply(
            "multi-agent", None, "refine", "seasonal-naive", agents, eywa=True
        )
        config = parse_and_validate_config(reply, SPACE)
        assert config.multi_agent_type == "refine"
        assert len(config.agents) == 2
        assert config.agents[0]["foundation_model"] == "seasonal-naive"


class TestInstantiate:
    def _registry(self):
        return BackendRegistry(
            [
                RelayChatBackend("relay-llm"),
                LastValueForecaster("last-value"),
                SeasonalNaiveForecaster("seasonal-naive"),
            ]
        )

    def test_single_agent_shapes(self):
        config = parse_and_validate_config(
            _reply("single-agent", "relay-llm", None, "last-value", []), SPACE
        )
        system = instantiate(config, self._registry())
        assert system.setting == "single-agent"
        assert len(system.specs) == 1
        assert system.specs[0].eywa and system.specs[0].fm_backend == "last-value"

    def test_multi_agent_shapes(self):
        agents = [VALID_AGENT, dict(VALID_AGENT, agent_id="agent-1")]
        config = parse_and_validate_config(
            _reply("multi-agent", None, "refine", None, agents), SPACE
        )
        system = instantiate(config, self._registry())
        assert system.setting == "multi-agent"
        assert system.topology.name == "refine"
        assert len(system.specs) == 2

    def test_instantiated_single_agent_runs(self):
        config = parse_and_validate_config(
            _reply("single-agent", "relay-llm", None, "last-value", []), SPACE
        )
        outcome = instantiate(config, self._registry())(FLAT_FORECAST)
        assert outcome.status == "ok"
        assert outcome.final_answer == "timestamp,value\n8,5\n9,5"


class TestEnumerate:
    def test_sweep_is_finite_and_deterministic(self):
        configs = SPACE.enumerate()
        assert configs == SPACE.enumerate()
        # 1 LLM x (1 plain + 2 eywa) singles, 3 topologies x 3 fm options.
        assert len(configs) == 3 + 9
        singles = [c for c in configs if c.setting == "single-agent"]
        assert len(singles) == 3
        for c in configs:
            if c.setting == "multi-agent":
                assert c.multi_agent_type in SPACE.topology_pool
                assert c.agents


class TestRunOrchestra:
    def test_planned_config_is_executed(self):
        planner_reply = _reply("single-agent", "relay-llm", None, "last-value", [])
        registry = BackendRegistry(
            [
                ScriptedChatBackend("planner", [planner_reply], cycle=True),
                RelayChatBackend("relay-llm"),
                LastValueForecaster("last-value"),
            ]
        )
        outcome = run_orchestra(FLAT_FORECAST, SPACE, "planner", registry)
        assert outcome.status == "ok"
        assert outcome.final_answer == "timestamp,value\n8,5\n9,5"
        assert outcome.trace.fallback_used is False
        assert outcome.trace.orchestra_config["foundation_model"] == "last-value"
        # Planner tokens are part of the episode's account.
        assert outcome.trace.usage_records[0].backend_id == "planner"

    def test_garbage_planner_falls_back(self):
        registry = BackendRegistry(
            [
                ScriptedChatBackend("planner", ["not json at all"], cycle=True),
                RelayChatBackend("relay-llm"),
                LastValueForecaster("last-value"),
            ]
        )
        outcome = run_orchestra(NL_TASK, SPACE, "planner", registry)
        assert outcome.trace.fallback_used is True
        invalid = [
            e for e in outcome.trace.events if e["kind"] == "planner_invalid_config"
        ]
        assert len(invalid) == 3
        assert outcome.trace.orchestra_config == default_fallback_config(SPACE).to_json()
        assert outcome.status == "ok"  # the fallback system still answers


class TestOracleConductor:
    CONFIGS = (
        OrchestraConfig(
            eywa=True, setting="single-agent", model="relay-llm",
            foundation_model="last-value",
        ),
        OrchestraConfig(
            eywa=True, setting="single-agent", model="relay-llm",
            foundation_model="seasonal-naive",
        ),
    )

    def _registry(self):
        return BackendRegistry(
            [
                RelayChatBackend("relay-llm"),
                LastValueForecaster("last-value"),
                SeasonalNaiveForecaster("seasonal-naive"),
            ]
        )

    def test_oracle_strictly_dominates_on_mixed_tasks(self):
        # Trend favors persistence, alternating favors seasonal-naive.
        comparison = oracle_conductor(
            [TREND_FORECAST, ALT_FORECAST],
            SPACE,
            self._registry(),
            _scorer,
            configs=self.CONFIGS,
        )
        for fixed in comparison.fixed_mean_losses:
            assert comparison.oracle_mean_loss < fixed

    def test_oracle_equals_best_fixed_on_degenerate_set(self):
        comparison = oracle_conductor(
            [FLAT_FORECAST, FLAT_FORECAST],
            SPACE,
            self._registry(),
            _scorer,
            configs=self.CONFIGS,
        )
        assert comparison.oracle_mean_loss == min(comparison.fixed_mean_losses)

    def test_singleton_config_space(self):
        comparison = oracle_conductor(
            [FLAT_FORECAST], SPACE, self._registry(), _scorer,
            configs=self.CONFIGS[:1],
        )
        assert comparison.per_task_best == (0,)
        assert comparison.oracle_mean_loss == comparison.fixed_mean_losses[0]

    def test_nondeterministic_backend_detected(self):
        registry = BackendRegistry(
            [
                ScriptedChatBackend(
                    "relay-llm",
                    ["timestamp,value\n8,5\n9,5", "timestamp,value\n8,7\n9,7"],
                    cycle=True,
                ),
                LastValueForecaster("last-value"),
                SeasonalNaiveForecaster("seasonal-naive"),
            ]
        )
        config = OrchestraConfig(
            eywa=False, setting="single-agent", model="relay-llm"
        )
        with pytest.raises(ConfigError, match="non-deterministic"):
            oracle_conductor(
                [FLAT_FORECAST], SPACE, registry, _scorer, configs=(config,)
            )
