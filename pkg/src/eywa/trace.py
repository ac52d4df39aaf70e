"""Execution traces shared by single-agent and multi-agent runs."""

from __future__ import annotations

from dataclasses import dataclass, field

from eywa.backends import UsageRecord


@dataclass(frozen=True)
class MessageEnvelope:
    sender: int
    receiver: int
    round_index: int
    body: str


@dataclass
class SystemTrace:
    """Full record of one episode: chat transcript, backend calls,
    messages, retries, and the final answer."""

    events: list[dict] = field(default_factory=list)
    usage_records: list[UsageRecord] = field(default_factory=list)
    envelopes: list[MessageEnvelope] = field(default_factory=list)
    transcript: list[tuple[str, str]] = field(default_factory=list)
    attempts: dict[str, int] = field(default_factory=dict)
    final_answer: str = ""
    orchestra_config: dict | None = None
    fallback_used: bool = False

    def record(self, kind: str, **details) -> None:
        self.events.append({"kind": kind, **details})

    def add_usage(self, record: UsageRecord | None) -> None:
        if record is not None:
            self.usage_records.append(record)

    def total_tokens(self) -> int:
        return sum(u.input_tokens + u.output_tokens for u in self.usage_records)

    def chat_tokens(self) -> int:
        return self.total_tokens()
