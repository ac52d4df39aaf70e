"""One agent episode end to end: a chat model coupled to a forecasting
specialist solves a desk-benchmark task, and the transcript shows the
specialist's output flowing into the prompt.

Run with: python demos/02_agent_episode.py
"""

from eywa.agent import AgentSpec, run_episode
from eywa.backends import (
    BackendRegistry,
    RelayChatBackend,
    SeasonalNaiveForecaster,
)
from eywa.desk import desk_benchmark
from eywa.harness import score_outcome

task = desk_benchmark().instances[5]  # period-2 alternating traffic series
registry = BackendRegistry(
    [RelayChatBackend("relay-llm"), SeasonalNaiveForecaster("seasonal-naive")]
)
spec = AgentSpec(
    agent_id="solo",
    chat_backend="relay-llm",
    eywa=True,
    fm_backend="seasonal-naive",
    control_policy="always-invoke",
)

outcome = run_episode(task, spec, registry)
score, _ = score_outcome(task, outcome)

print(f"task: {task.description}")
print(f"status: {outcome.status}  attempts: {outcome.attempt}")
print(f"utility: {score.value:.4f}")
print(f"chat tokens: {outcome.trace.total_tokens()}")
print("\n--- final prompt -------------------------------------")
prompt, reply = outcome.trace.transcript[-1]
print(prompt)
print("--- reply --------------------------------------------")
print(reply)
