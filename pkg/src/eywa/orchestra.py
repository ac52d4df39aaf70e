"""Planner-routed execution: render the planner prompt, validate the
returned JSON configuration against the hard constraints, instantiate
the configured system, and run it.  A brute-force oracle conductor
supports adaptivity testing."""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from eywa.agent import (
    AgentSpec,
    EpisodeOutcome,
    run_episode,
)
from eywa.backends import (
    BackendRegistry,
    InvocationRequest,
    invoke,
)
from eywa.bench import BenchmarkSet, TaskInstance
from eywa.mas import TOPOLOGY_POOL, build_topology, run_mas
from eywa.trace import SystemTrace

PLANNER_MAX_ATTEMPTS = 3  # one call plus two retries

CONFIG_FIELDS = ("eywa", "setting", "model", "multi_agent_type", "foundation_model", "agents")

AGENT_SPEC_FIELDS = ("agent_id", "role_prompt", "model", "eywa", "foundation_model")

_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


class ConfigError(ValueError):
    """Planner configuration rejected; the message names the rule."""


@dataclass(frozen=True)
class OrchestraConfig:
    eywa: bool
    setting: str  # single-agent | multi-agent
    model: str | None = None
    multi_agent_type: str | None = None
    foundation_model: str | None = None
    agents: tuple[dict, ...] = ()

    def to_json(self) -> dict:
        return {
            "eywa": self.eywa,
            "setting": self.setting,
            "model": self.model,
            "multi_agent_type": self.multi_agent_type,
            "foundation_model": self.foundation_model,
            "agents": [dict(a) for a in self.agents],
        }


@dataclass(frozen=True)
class ConfigSpace:
    llm_pool: tuple[str, ...]
    fm_pool: tuple[str, ...]
    topology_pool: tuple[str, ...] = TOPOLOGY_POOL

    def enumerate(self) -> list[OrchestraConfig]:
        """Finite, deterministic sweep: every single-agent combination,
        plus each multi-agent topology with homogeneous default agents."""
        configs = []
        for model in self.llm_pool:
            configs.append(
                OrchestraConfig(eywa=False, setting="single-agent", model=model)
            )
            for fm in self.fm_pool:
                configs.append(
                    OrchestraConfig(
                        eywa=True,
                        setting="single-agent",
                        model=model,
                        foundation_model=fm,
                    )
                )
        for name, fm in itertools.product(self.topology_pool, (None, *self.fm_pool)):
            if name == "single":
                continue
            n = 2 if name == "refine" else 3
            agents = tuple(
                {
                    "agent_id": f"agent-{i}",
                    "role_prompt": "",
                    "model": self.llm_pool[0],
                    "eywa": fm is not None and i == 0,
                    "foundation_model": fm if i == 0 else None,
                }
                for i in range(n)
            )
            configs.append(
                OrchestraConfig(
                    eywa=fm is not None,
                    setting="multi-agent",
                    multi_agent_type=name,
                    foundation_model=fm,
                    agents=agents,
                )
            )
        return configs


@dataclass(frozen=True)
class ConductorDecision:
    raw_planner_reply: str
    config: OrchestraConfig
    planner_usage: object = None


def render_planner_prompt(
    task: TaskInstance, space: ConfigSpace, registry: BackendRegistry | None = None
) -> str:
    """Planner prompt: pools, topology list, the task's description /
    domain / type, the hard constraints, and the output schema."""
    if not space.llm_pool or not space.fm_pool or not space.topology_pool:
        raise ConfigError("empty pool")

    def describe(backend_id: str) -> str:
        if registry is not None and backend_id in registry:
            desc = registry.get(backend_id).descriptor.description
            if desc:
                return f"- {backend_id}: {desc}"
        return f"- {backend_id}"

    llm_lines = "\n".join(describe(m) for m in space.llm_pool)
    fm_lines = "\n".join(describe(m) for m in space.fm_pool)
    topo_lines = "\n".join(f"- {t}" for t in space.topology_pool)
    return f"""You are an orchestration planner for the Eywa Agentic System.

Your job is to choose an execution configuration for a single task.

Available LLM models and descriptions:
{llm_lines}

Available foundation models and descriptions:
{fm_lines}

Supported multi-agent topology pool:
{topo_lines}

Input task:
- Task Description: {task.description}
- Domain: {task.domain}
- Task Type: {task.task}

Hard constraints:
- Output must be valid JSON only (no markdown, no code fence, no extra text).
- All six fields must be present.
- If "setting" is "single-agent":
  - "model" must be a valid model string.
  - "multi_agent_type" must be null.
  - "foundation_model" should be in the available foundation models or null.
  - "agents" must be an empty list [].
- If "setting" is "multi-agent":
  - "model" must be null.
  - "multi_agent_type" must be in the topology pool.
  - "foundation_model" should be in the available foundation models or null.
  - "agents" must be a non-empty list of valid agent specs.

Output format:
{{
  "eywa": true or false,
  "setting": "single-agent" or "multi-agent",
  "model": <llm_model> or null,
  "multi_agent_type": <multi_agent_topology> or null,
  "foundation_model": <foundation_model> or null,
  "agents": [<agent_spec_1>, <agent_spec_2>, ...] or []
}}"""


def _validate_agent_spec(obj: object, space: ConfigSpace, index: int) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"agents[{index}] must be an object")
    missing = [f for f in AGENT_SPEC_FIELDS if f not in obj]
    if missing:
        raise ConfigError(f"agents[{index}] missing fields {missing}")
    if obj["model"] not in space.llm_pool:
        raise ConfigError(f"agents[{index}].model {obj['model']!r} not in LLM pool")
    if not isinstance(obj["eywa"], bool):
        raise ConfigError(f"agents[{index}].eywa must be a boolean")
    fm = obj["foundation_model"]
    if fm is not None and fm not in space.fm_pool:
        raise ConfigError(f"agents[{index}].foundation_model {fm!r} not in FM pool")
    if obj["eywa"] and fm is None:
        raise ConfigError(f"agents[{index}] has eywa=true but no foundation_model")
    return dict(obj)


def parse_and_validate_config(reply: str, space: ConfigSpace) -> OrchestraConfig:
    """Parse the planner reply (a bare JSON object; one fenced block is
    tolerated) and enforce every cross-field hard constraint."""
    text = reply.strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"reply is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("reply must be a single JSON object")
    missing = [f for f in CONFIG_FIELDS if f not in obj]
    if missing:
        raise ConfigError(f"missing fields {missing}")
    extra = [f for f in obj if f not in CONFIG_FIELDS]
    if extra:
        raise ConfigError(f"unknown fields {extra}")
    if not isinstance(obj["eywa"], bool):
        raise ConfigError("eywa must be a boolean")
    setting = obj["setting"]
    if setting not in ("single-agent", "multi-agent"):
        raise ConfigError(f"setting must be single-agent or multi-agent, got {setting!r}")
    if not isinstance(obj["agents"], list):
        raise ConfigError("agents must be a list")
    fm = obj["foundation_model"]
    if fm is not None and fm not in space.fm_pool:
        raise ConfigError(f"foundation_model {fm!r} not in the available foundation models")
    if setting == "single-agent":
        if obj["model"] not in space.llm_pool:
            raise ConfigError("model must be a valid model string")
        if obj["multi_agent_type"] is not None:
            raise ConfigError("multi_agent_type must be null")
        if obj["agents"]:
            raise ConfigError("agents must be an empty list")
        agents: tuple[dict, ...] = ()
    else:
        if obj["model"] is not None:
            raise ConfigError("model must be null")
        if obj["multi_agent_type"] not in space.topology_pool:
            raise ConfigError("multi_agent_type must be in the topology pool")
        if not obj["agents"]:
            raise ConfigError("agents must be a non-empty list of valid agent specs")
        agents = tuple(
            _validate_agent_spec(a, space, i) for i, a in enumerate(obj["agents"])
        )
    return OrchestraConfig(
        eywa=obj["eywa"],
        setting=setting,
        model=obj["model"],
        multi_agent_type=obj["multi_agent_type"],
        foundation_model=fm,
        agents=agents,
    )


def _agent_spec_from_config(config: OrchestraConfig, policy: str = "always-invoke") -> AgentSpec:
    eywa = config.eywa and config.foundation_model is not None
    return AgentSpec(
        agent_id="solo",
        chat_backend=config.model,
        eywa=eywa,
        fm_backend=config.foundation_model if eywa else None,
        control_policy=policy if eywa else "always-skip",
    )


@dataclass(frozen=True)
class ExecutableSystem:
    """An instantiated system: call it on a task to get an outcome."""

    setting: str
    specs: tuple[AgentSpec, ...]
    topology: object = None
    _run: Callable = None

    def __call__(self, task: TaskInstance) -> EpisodeOutcome:
        return self._run(task)


def instantiate(config: OrchestraConfig, registry: BackendRegistry) -> ExecutableSystem:
    """Build an executable system from a validated configuration."""
    if config.setting == "single-agent":
        spec = _agent_spec_from_config(config)
        return ExecutableSystem(
            setting="single-agent",
            specs=(spec,),
            _run=lambda task: run_episode(task, spec, registry),
        )
    specs = []
    for entry in config.agents:
        eywa = bool(entry["eywa"]) and entry["foundation_model"] is not None
        specs.append(
            AgentSpec(
                agent_id=entry["agent_id"],
                chat_backend=entry["model"],
                role_prompt=entry.get("role_prompt", ""),
                eywa=eywa,
                fm_backend=entry["foundation_model"] if eywa else None,
                control_policy="always-invoke" if eywa else "always-skip",
            )
        )
    topology = build_topology(config.multi_agent_type, len(specs))
    specs = tuple(specs)
    return ExecutableSystem(
        setting="multi-agent",
        specs=specs,
        topology=topology,
        _run=lambda task: run_mas(task, topology, specs, registry),
    )


def default_fallback_config(space: ConfigSpace) -> OrchestraConfig:
    return OrchestraConfig(eywa=False, setting="single-agent", model=space.llm_pool[0])


def run_orchestra(
    task: TaskInstance,
    space: ConfigSpace,
    planner_backend: str,
    registry: BackendRegistry,
) -> EpisodeOutcome:
    """Plan, validate, instantiate, execute.  Invalid planner JSON is
    retried (three attempts total); exhaustion falls back to a
    language-only single-agent default, recorded in the trace."""
    prompt = render_planner_prompt(task, space, registry)
    planner_trace = SystemTrace()
    config = None
    raw = ""
    for attempt in range(1, PLANNER_MAX_ATTEMPTS + 1):
        request = InvocationRequest(
            backend_id=planner_backend,
            task_type="chat",
            payload=[{"role": "user", "content": prompt}],
            config={},
        )
        result = invoke(request, registry)
        planner_trace.add_usage(result.usage)
        if result.status != "ok":
            planner_trace.record("planner_backend_failed", error=result.error)
            continue
        raw = result.output
        try:
            config = parse_and_validate_config(raw, space)
            break
        except ConfigError as exc:
            planner_trace.record(
                "planner_invalid_config", attempt=attempt, reason=str(exc)
            )
            prompt = prompt + "\n\n" + (
                "Your previous output could not be parsed. "
                "Reply with only the required JSON object."
            )
    fallback = config is None
    if fallback:
        config = default_fallback_config(space)
        planner_trace.record("planner_fallback", config=config.to_json())
    system = instantiate(config, registry)
    outcome = system(task)
    trace = outcome.trace
    trace.orchestra_config = config.to_json()
    trace.fallback_used = fallback
    trace.usage_records = planner_trace.usage_records + trace.usage_records
    trace.events = planner_trace.events + trace.events
    if raw:
        trace.record("planner_reply", text=raw)
    return EpisodeOutcome(outcome.final_answer, trace, outcome.status, outcome.attempt)


@dataclass(frozen=True)
class OracleComparison:
    per_task_best: tuple[int, ...]  # index into configs, per task
    oracle_mean_loss: float
    fixed_mean_losses: tuple[float, ...]
    configs: tuple[OrchestraConfig, ...]


def oracle_conductor(
    tasks: BenchmarkSet | Sequence[TaskInstance],
    space: ConfigSpace,
    registry: BackendRegistry,
    scorer: Callable[[TaskInstance, EpisodeOutcome], float],
    configs: Sequence[OrchestraConfig] | None = None,
) -> OracleComparison:
    """Run every configuration on every task and compare the oracle
    adaptive mean loss against each fixed configuration's mean loss.
    Requires deterministic backends; ties break by enumeration order."""
    instances = list(tasks)
    configs = tuple(configs if configs is not None else space.enumerate())
    losses = []  # losses[c][t]
    for config in configs:
        row = []
        for task in instances:
            u1 = scorer(task, instantiate(config, registry)(task))
            u2 = scorer(task, instantiate(config, registry)(task))
            if u1 != u2:
                raise ConfigError(
                    "non-deterministic backend detected: two runs disagree"
                )
            row.append(1.0 - u1)
        losses.append(row)
    n = len(instances)
    fixed_means = tuple(sum(row) / n for row in losses)
    best_per_task = tuple(
        min(range(len(configs)), key=lambda c: losses[c][t]) for t in range(n)
    )
    oracle_mean = sum(losses[best_per_task[t]][t] for t in range(n)) / n
    return OracleComparison(
        per_task_best=best_per_task,
        oracle_mean_loss=oracle_mean,
        fixed_mean_losses=fixed_means,
        configs=configs,
    )
