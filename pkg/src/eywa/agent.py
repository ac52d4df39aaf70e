"""Single-agent step loop: prompt rendering, invoke/skip control,
answer parsing, and the parse-retry protocol (up to two retries)."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from eywa.backends import (
    AdaptedContext,
    BackendDescriptor,
    BackendError,
    BackendRegistry,
    InvocationRequest,
    KIND_CHAT,
    adapt_response,
    compile_query,
    invoke,
)
from eywa.bench import (
    Series,
    TASK_FORECAST,
    TASK_NL,
    TASK_TAB_CLS,
    TASK_TAB_REG,
    TaskInstance,
    parse_series_csv,
    parse_table_csv,
)
from eywa.trace import SystemTrace

MAX_RETRIES = 2  # three attempts total
MAX_STEPS = 8

RETRY_NOTICE = (
    "Your previous output could not be parsed. "
    "Reply with only the required format."
)

_CALL_MARKER = re.compile(r"^CALL\s+(\S+)\s*$", re.MULTILINE)

INPUT_TAGS = {
    TASK_NL: "question",
    TASK_FORECAST: "time_series",
    TASK_TAB_CLS: "table",
    TASK_TAB_REG: "table",
}

TASK_LABELS = {
    TASK_NL: "scientific question answering",
    TASK_FORECAST: "time-series forecast",
    TASK_TAB_CLS: "tabular classification",
    TASK_TAB_REG: "tabular regression",
}

OUTPUT_FORMATS = {
    TASK_NL: "Reply with only the final answer.",
    TASK_FORECAST: "Reply with only a timestamp,value CSV forecast block.",
    TASK_TAB_CLS: "Reply with only the predicted target values, one per line.",
    TASK_TAB_REG: "Reply with only the predicted target values, one per line.",
}


class AgentError(Exception):
    pass


@dataclass(frozen=True)
class PromptBundle:
    task_label: str
    mcp_server_description: str
    additional_instructions: str
    input_tag: str
    input_data: str
    output_size: int
    output_format: str


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    chat_backend: str
    role_prompt: str = ""
    eywa: bool = False
    fm_backend: str | None = None
    control_policy: object = "always-skip"  # name or scripted decision list
    fm_config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.eywa and not self.fm_backend:
            raise AgentError("eywa agent requires fm_backend")
        if not self.eywa and self.fm_backend:
            raise AgentError("non-eywa agent must not name an fm_backend")


@dataclass(frozen=True)
class ControlDecision:
    action: str  # invoke | skip
    target: str | None = None

    def __post_init__(self) -> None:
        if self.action == "invoke" and not self.target:
            raise AgentError("invoke decision requires a target backend")


@dataclass
class AgentState:
    """Linear episode history: the base prompt plus append-only context."""

    task: TaskInstance
    base_prompt: str = ""
    context_entries: list[str] = field(default_factory=list)
    attempt: int = 1
    parsed_payloads: dict = field(default_factory=dict)
    fm_config: dict = field(default_factory=dict)
    pending_reply: str | None = None

    def append(self, entry: str | AdaptedContext) -> None:
        text = entry.text_block if isinstance(entry, AdaptedContext) else entry
        self.context_entries.append(text)

    def messages(self) -> list[dict]:
        content = self.base_prompt
        if self.context_entries:
            content += "\n\n" + "\n\n".join(self.context_entries)
        return [{"role": "user", "content": content}]


@dataclass(frozen=True)
class EpisodeOutcome:
    final_answer: str
    trace: SystemTrace
    status: str  # ok | parse_failed | backend_failed
    attempt: int = 1


def render_prompt(bundle: PromptBundle) -> str:
    """Instantiate the unified prompt skeleton.  Empty optional fields
    leave no stray placeholder lines."""
    header = f"You are an expert in {bundle.task_label}."
    if bundle.mcp_server_description:
        header += f" {bundle.mcp_server_description}."
    if bundle.additional_instructions:
        header += f" {bundle.additional_instructions}"
    parts = [
        header,
        "",
        f"<{bundle.input_tag}>",
        bundle.input_data,
        f"</{bundle.input_tag}>",
        "",
        f"<output_size>{bundle.output_size}</output_size>",
    ]
    if bundle.output_format:
        parts += ["", bundle.output_format]
    return "\n".join(parts)


def serialize_input(task: TaskInstance) -> str:
    """Render the full modality payload as prompt text (the path a
    language-only agent must take)."""
    return task.input


def parse_payloads(task: TaskInstance) -> dict:
    """Extract structured payloads from the task input.  For tables the
    target column is by convention the last header column."""
    if task.task == TASK_FORECAST:
        return {"series": parse_series_csv(task.input)}
    if task.task in (TASK_TAB_CLS, TASK_TAB_REG):
        header = task.input.strip().splitlines()[0]
        target = header.split(",")[-1].strip()
        return {"table": parse_table_csv(task.input, target)}
    return {"question": task.input}


def _payload_summary(task: TaskInstance, payloads: dict) -> str:
    if "series" in payloads:
        return f"(a {len(payloads['series'])}-point series is attached to the foundation model)"
    if "table" in payloads:
        n = len(payloads["table"].masked_rows)
        return f"(a table with {n} masked target rows is attached to the foundation model)"
    return task.input


def build_prompt(
    task: TaskInstance,
    spec: AgentSpec,
    registry: BackendRegistry | None = None,
) -> str:
    """Prompt for one agent.  An invoke-capable agent sees a short payload
    summary plus the attached model's description; everything else gets
    the fully serialized payload (identical to the language-only path)."""
    payloads = parse_payloads(task)
    uses_fm = spec.eywa and spec.control_policy != "always-skip"
    if uses_fm and task.task != TASK_NL:
        fm_desc = ""
        if registry is not None and spec.fm_backend in registry:
            fm_desc = registry.get(spec.fm_backend).descriptor.description
        mcp = f"You can call the attached foundation model {spec.fm_backend}"
        if fm_desc:
            mcp += f" ({fm_desc})"
        input_data = _payload_summary(task, payloads)
    else:
        mcp = ""
        input_data = serialize_input(task)
    bundle = PromptBundle(
        task_label=TASK_LABELS[task.task],
        mcp_server_description=mcp,
        additional_instructions=spec.role_prompt,
        input_tag=INPUT_TAGS[task.task],
        input_data=input_data,
        output_size=task.output_size,
        output_format=OUTPUT_FORMATS[task.task],
    )
    return render_prompt(bundle)


def _chat_reply(
    state: AgentState, spec: AgentSpec, registry: BackendRegistry, trace: SystemTrace
) -> str:
    backend = registry.get(spec.chat_backend)
    request = compile_query(_chat_view(state), backend.descriptor)
    result = invoke(request, registry)
    trace.add_usage(result.usage)
    if result.status != "ok":
        code, message = result.error or ("backend", "chat failure")
        raise BackendError(code, message)
    prompt_text = request.payload[0]["content"]
    trace.transcript.append((prompt_text, result.output))
    return result.output


def _chat_view(state: AgentState) -> AgentState:
    return state


def decide(
    state: AgentState,
    policy: object,
    spec: AgentSpec,
    registry: BackendRegistry,
    trace: SystemTrace,
) -> ControlDecision:
    """Choose invoke vs skip.  Policies: always-skip, always-invoke
    (invoke until specialist context exists, then skip), a scripted
    decision list, or llm-induced (a ``CALL <backend_id>`` line in the
    chat reply requests an invocation)."""
    if isinstance(policy, (list, tuple)):
        index = sum(1 for e in trace.events if e["kind"] == "decision")
        decision = policy[index] if index < len(policy) else ControlDecision("skip")
    elif policy == "always-skip":
        decision = ControlDecision("skip")
    elif policy == "always-invoke":
        has_fm_context = any(e["kind"] == "fm_context" for e in trace.events)
        if has_fm_context:
            decision = ControlDecision("skip")
        else:
            decision = ControlDecision("invoke", target=spec.fm_backend)
    elif policy == "llm-induced":
        reply = _chat_reply(state, spec, registry, trace)
        match = _CALL_MARKER.search(reply)
        if match:
            decision = ControlDecision("invoke", target=match.group(1))
        else:
            state.pending_reply = reply
            decision = ControlDecision("skip")
    else:
        raise AgentError(f"unknown control policy {policy!r}")
    if decision.action == "invoke" and decision.target not in registry:
        raise AgentError(f"invoke names unregistered backend {decision.target!r}")
    trace.record("decision", action=decision.action, target=decision.target)
    return decision


def step(
    state: AgentState,
    decision: ControlDecision,
    spec: AgentSpec,
    registry: BackendRegistry,
    trace: SystemTrace,
) -> AgentState:
    """One state transition.  Skip appends the chat reply; invoke appends
    the adapted specialist output.  Prior entries are never touched."""
    if decision.action == "invoke":
        target = registry.get(decision.target).descriptor
        request = compile_query(state, target)
        result = invoke(request, registry)
        trace.add_usage(result.usage)
        if result.status != "ok":
            code, message = result.error or ("backend", "invocation failed")
            trace.record("backend_failed", code=code, message=message)
            return state
        context = adapt_response(result)
        state.append(context)
        trace.record("fm_context", provenance=context.provenance)
        return state
    if state.pending_reply is not None:
        reply = state.pending_reply
        state.pending_reply = None
    else:
        reply = _chat_reply(state, spec, registry, trace)
    state.append(reply)
    trace.record("chat_reply", agent=spec.agent_id)
    return state


def _extract_csv_block(reply: str) -> str | None:
    lines = reply.splitlines()
    for i, line in enumerate(lines):
        if line.strip() == "timestamp,value":
            block = [line.strip()]
            for nxt in lines[i + 1 :]:
                stripped = nxt.strip()
                if stripped and stripped.count(",") == 1:
                    block.append(stripped)
                else:
                    break
            return "\n".join(block)
    return None


def parse_final_answer(task: TaskInstance, reply: str) -> str:
    """Validate a chat reply against the task's output contract and
    return the canonical answer text.  Raises AgentError on violation."""
    text = reply.strip()
    if not text:
        raise AgentError("empty reply")
    if task.task == TASK_FORECAST:
        block = _extract_csv_block(reply)
        if block is None:
            raise AgentError("no timestamp,value CSV block in reply")
        series = parse_series_csv(block)
        if len(series) != task.output_size:
            raise AgentError(
                f"forecast has {len(series)} points, expected {task.output_size}"
            )
        return block
    if task.task in (TASK_TAB_CLS, TASK_TAB_REG):
        values = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if len(values) != task.output_size:
            raise AgentError(
                f"{len(values)} predictions, expected {task.output_size}"
            )
        if task.task == TASK_TAB_REG:
            for v in values:
                try:
                    float(v)
                except ValueError:
                    raise AgentError(f"non-numeric prediction {v!r}") from None
        return "\n".join(values)
    if task.output_size >= 1 and len(text) > task.output_size:
        raise AgentError(
            f"answer length {len(text)} exceeds limit {task.output_size}"
        )
    return text


def run_episode(
    task: TaskInstance,
    spec: AgentSpec,
    registry: BackendRegistry,
    max_steps: int = MAX_STEPS,
    max_retries: int = MAX_RETRIES,
    trace: SystemTrace | None = None,
    state: AgentState | None = None,
) -> EpisodeOutcome:
    """Run decide/step until the chat model emits a parseable final
    answer.  Parse failures re-prompt with a fixed notice, at most
    ``max_retries`` times (so three attempts total)."""
    trace = trace if trace is not None else SystemTrace()
    if state is None:
        state = AgentState(task=task, parsed_payloads=parse_payloads(task))
        state.fm_config = dict(spec.fm_config)
        state.base_prompt = build_prompt(task, spec, registry)
    backend_failed = False
    for _ in range(max_steps):
        try:
            decision = decide(state, spec.control_policy, spec, registry, trace)
        except BackendError as exc:
            trace.record("backend_failed", code=exc.code, message=exc.message)
            trace.attempts[spec.agent_id] = state.attempt
            return EpisodeOutcome("", trace, "backend_failed", state.attempt)
        if decision.action == "invoke":
            before = len(trace.events)
            step(state, decision, spec, registry, trace)
            if any(
                e["kind"] == "backend_failed" for e in trace.events[before:]
            ):
                backend_failed = True
            continue
        try:
            step(state, decision, spec, registry, trace)
        except BackendError as exc:
            trace.record("backend_failed", code=exc.code, message=exc.message)
            trace.attempts[spec.agent_id] = state.attempt
            return EpisodeOutcome("", trace, "backend_failed", state.attempt)
        reply = state.context_entries[-1]
        try:
            answer = parse_final_answer(task, reply)
        except AgentError as exc:
            trace.record("parse_failure", attempt=state.attempt, reason=str(exc))
            if state.attempt > max_retries:
                trace.attempts[spec.agent_id] = state.attempt
                return EpisodeOutcome("", trace, "parse_failed", state.attempt)
            state.attempt += 1
            state.append(RETRY_NOTICE)
            continue
        trace.final_answer = answer
        trace.attempts[spec.agent_id] = state.attempt
        return EpisodeOutcome(answer, trace, "ok", state.attempt)
    trace.attempts[spec.agent_id] = state.attempt
    status = "backend_failed" if backend_failed else "parse_failed"
    return EpisodeOutcome("", trace, status, state.attempt)
