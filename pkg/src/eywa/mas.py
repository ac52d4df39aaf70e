"""Multi-agent execution over a finite topology pool with synchronous
message rounds.  Any node can be a language-only agent or an agent
coupled to a foundation model."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from eywa.agent import (
    AgentError,
    AgentSpec,
    AgentState,
    EpisodeOutcome,
    build_prompt,
    decide,
    parse_payloads,
    run_episode,
    step,
)
from eywa.backends import BackendError, BackendRegistry
from eywa.bench import TaskInstance
from eywa.trace import MessageEnvelope, SystemTrace

TOPOLOGY_POOL = ("single", "refine", "debate", "star")

DEFAULT_DEBATE_AGENTS = 3
DEFAULT_ROUNDS = 2


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class TopologySpec:
    name: str
    n_agents: int
    rounds: int
    edges: tuple[tuple[int, int], ...]
    final_node: int
    diameter: int


def _shortest_path(edges, n_agents, source: int, target: int) -> int | None:
    adjacency = {i: [] for i in range(n_agents)}
    for a, b in edges:
        adjacency[a].append(b)
    seen = {source}
    queue = deque([(source, 0)])
    while queue:
        node, dist = queue.popleft()
        if node == target:
            return dist
        for nxt in adjacency[node]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, dist + 1))
    return None


def build_topology(name: str, n_agents: int, rounds: int = DEFAULT_ROUNDS) -> TopologySpec:
    """Generate a topology from the pool (plus 'chain' for diagnostics).

    single: 1 node, no edges.  refine: author/critic 2-cycle, author
    answers.  debate: complete digraph, lowest index answers.  star:
    workers feed one aggregator, the aggregator answers.
    """
    if n_agents < 1 or rounds < 1:
        raise TopologyError("n_agents and rounds must be >= 1")
    if name == "single":
        if n_agents != 1:
            raise TopologyError("single topology requires exactly 1 agent")
        edges: tuple = ()
        final = 0
    elif name == "refine":
        if n_agents != 2:
            raise TopologyError("refine topology requires exactly 2 agents")
        edges = ((0, 1), (1, 0))
        final = 0
    elif name == "debate":
        if n_agents < 2:
            raise TopologyError("debate topology requires >= 2 agents")
        edges = tuple(
            (i, j) for i in range(n_agents) for j in range(n_agents) if i != j
        )
        final = 0
    elif name == "star":
        if n_agents < 2:
            raise TopologyError("star topology requires >= 2 agents")
        edges = tuple((i, 0) for i in range(1, n_agents))
        final = 0
    elif name == "chain":
        if n_agents < 2:
            raise TopologyError("chain topology requires >= 2 agents")
        edges = tuple((i, i + 1) for i in range(n_agents - 1))
        final = n_agents - 1
    else:
        raise TopologyError(f"unknown topology {name!r}")
    distances = [
        _shortest_path(edges, n_agents, i, final) for i in range(n_agents)
    ]
    diameter = max(d for d in distances if d is not None)
    return TopologySpec(
        name=name,
        n_agents=n_agents,
        rounds=rounds,
        edges=edges,
        final_node=final,
        diameter=diameter,
    )


def reachability_check(topology: TopologySpec, injector: int) -> int:
    """Minimal number of rounds for the injector's content to reach the
    final node (shortest path in edges)."""
    dist = _shortest_path(
        topology.edges, topology.n_agents, injector, topology.final_node
    )
    if dist is None:
        raise TopologyError(
            f"final node unreachable from agent {injector}"
        )
    return dist


@dataclass
class MasSystem:
    task: TaskInstance
    topology: TopologySpec
    agent_specs: tuple[AgentSpec, ...]
    registry: BackendRegistry
    trace: SystemTrace = field(default_factory=SystemTrace)
    states: list[AgentState] = field(default_factory=list)
    pending: list[MessageEnvelope] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.agent_specs) != self.topology.n_agents:
            raise TopologyError(
                f"{len(self.agent_specs)} agent specs for "
                f"{self.topology.n_agents}-agent topology"
            )
        if not self.states:
            for spec in self.agent_specs:
                state = AgentState(
                    task=self.task, parsed_payloads=parse_payloads(self.task)
                )
                state.fm_config = dict(spec.fm_config)
                state.base_prompt = build_prompt(self.task, spec, self.registry)
                self.states.append(state)


def deliver_pending(system: MasSystem) -> None:
    for env in system.pending:
        system.states[env.receiver].append(
            f"Message from agent {env.sender} (round {env.round_index}): {env.body}"
        )
    system.pending = []


def _agent_reply(system: MasSystem, index: int) -> str:
    state = system.states[index]
    spec = system.agent_specs[index]
    # At most one invoke before the reply within a round.
    for _ in range(2):
        decision = decide(
            state, spec.control_policy, spec, system.registry, system.trace
        )
        step(state, decision, spec, system.registry, system.trace)
        if decision.action == "skip":
            break
    return state.context_entries[-1]


def execute_round(system: MasSystem, round_index: int) -> MasSystem:
    """One synchronous round: deliver the previous round's messages to
    every agent, then let each agent (ascending index) emit one message
    per outgoing edge.  Same-round messages are never visible."""
    if round_index > system.topology.rounds:
        raise TopologyError(f"round {round_index} exceeds {system.topology.rounds}")
    deliver_pending(system)
    outgoing = {i: [] for i in range(system.topology.n_agents)}
    for a, b in system.topology.edges:
        outgoing[a].append(b)
    new_envelopes = []
    for i in range(system.topology.n_agents):
        if not outgoing[i]:
            continue
        body = _agent_reply(system, i)
        for j in sorted(outgoing[i]):
            new_envelopes.append(
                MessageEnvelope(sender=i, receiver=j, round_index=round_index, body=body)
            )
    system.pending = new_envelopes
    system.trace.envelopes.extend(new_envelopes)
    return system


def run_mas(
    task: TaskInstance,
    topology: TopologySpec,
    agent_specs: tuple[AgentSpec, ...] | list[AgentSpec],
    registry: BackendRegistry,
) -> EpisodeOutcome:
    """Execute all rounds, then let the final node produce the answer
    under the standard parse-retry budget."""
    if topology.name == "single":
        return run_episode(task, agent_specs[0], registry)
    system = MasSystem(
        task=task,
        topology=topology,
        agent_specs=tuple(agent_specs),
        registry=registry,
    )
    for round_index in range(1, topology.rounds + 1):
        try:
            execute_round(system, round_index)
        except (BackendError, AgentError) as exc:
            system.trace.record("round_aborted", round=round_index, reason=str(exc))
            return EpisodeOutcome("", system.trace, "backend_failed")
    deliver_pending(system)
    final = topology.final_node
    return run_episode(
        task,
        agent_specs[final],
        registry,
        trace=system.trace,
        state=system.states[final],
    )
