"""Operator surface: run a selected system over a benchmark, score each
instance, aggregate per-domain slices, and emit machine-readable
reports."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from eywa.agent import AgentSpec, EpisodeOutcome, run_episode
from eywa.backends import (
    BackendRegistry,
    KIND_CHAT,
    KIND_TAB,
    KIND_TS,
    registry_from_file,
)
from eywa.bench import (
    BenchmarkSet,
    PARENT_DOMAINS,
    SUB_DOMAINS,
    TASK_FORECAST,
    TASK_NL,
    TASK_TAB_CLS,
    TASK_TAB_REG,
    TaskInstance,
    load_benchmark,
    parse_series_csv,
)
from eywa.mas import DEFAULT_ROUNDS, build_topology, run_mas
from eywa.metrics import (
    MetricError,
    UtilityScore,
    aggregate,
    score_natural_language,
    score_tabular,
    score_time_series,
)
from eywa.orchestra import ConfigSpace, run_orchestra

SYSTEM_SELECTORS = ("llm", "eywa-agent", "mas:refine", "mas:debate", "mas:star", "orchestra")

MAS_SIZES = {"refine": 2, "debate": 3, "star": 4}


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    bench_path: str
    system: str
    registry_path: str | None = None
    workers: int = 1
    seed: int = 0
    out_path: str | None = None
    repeats: int = 1

    def __post_init__(self) -> None:
        base = self.system.split(":", 1)[0]
        if base not in ("llm", "eywa-agent", "mas", "orchestra"):
            raise HarnessError(f"unknown system selector {self.system!r}")
        if self.workers < 1:
            raise HarnessError("workers must be >= 1")


@dataclass
class RunReport:
    header: dict
    records: list[dict] = field(default_factory=list)
    slices: dict = field(default_factory=dict)
    overall: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "header": self.header,
            "records": self.records,
            "slices": self.slices,
            "overall": self.overall,
        }


def score_outcome(task: TaskInstance, outcome: EpisodeOutcome) -> tuple[UtilityScore, str]:
    """Map an episode outcome to a utility, with failure cause.  Failed
    episodes and malformed predictions score 0 at this level."""
    if outcome.status != "ok":
        return UtilityScore(value=0.0, stage="failed"), outcome.status
    return score_prediction(task, outcome.final_answer)


def score_prediction(task: TaskInstance, prediction: str) -> tuple[UtilityScore, str]:
    try:
        if task.task == TASK_NL:
            return score_natural_language(prediction, task.label), ""
        if task.task == TASK_FORECAST:
            pred = parse_series_csv(prediction)
            gold = parse_series_csv(task.label)
            return score_time_series(pred, gold), ""
        gold_values = [ln.strip() for ln in task.label.splitlines() if ln.strip()]
        pred_values = [ln.strip() for ln in prediction.splitlines() if ln.strip()]
        kind = "classification" if task.task == TASK_TAB_CLS else "regression"
        return score_tabular(pred_values, gold_values, kind), ""
    except (MetricError, ValueError) as exc:
        return UtilityScore(value=0.0, stage="failed"), str(exc)


def _first_backend(registry: BackendRegistry, kind: str) -> str | None:
    ids = registry.by_kind(kind)
    return ids[0] if ids else None


def _fm_for_task(registry: BackendRegistry, task: TaskInstance) -> str | None:
    if task.task == TASK_FORECAST:
        return _first_backend(registry, KIND_TS)
    if task.task in (TASK_TAB_CLS, TASK_TAB_REG):
        return _first_backend(registry, KIND_TAB)
    return None


def _run_system(task: TaskInstance, config: RunConfig, registry: BackendRegistry) -> EpisodeOutcome:
    chat = _first_backend(registry, KIND_CHAT)
    if chat is None:
        raise HarnessError("registry has no chat backend")
    base, _, option = config.system.partition(":")
    if base == "llm":
        spec = AgentSpec(agent_id="solo", chat_backend=chat)
        return run_episode(task, spec, registry)
    if base == "eywa-agent":
        fm = _fm_for_task(registry, task)
        if fm is None:
            spec = AgentSpec(agent_id="solo", chat_backend=chat)
        else:
            spec = AgentSpec(
                agent_id="solo",
                chat_backend=chat,
                eywa=True,
                fm_backend=fm,
                control_policy="always-invoke",
            )
        return run_episode(task, spec, registry)
    if base == "mas":
        name = option or "debate"
        n = MAS_SIZES.get(name)
        if n is None:
            raise HarnessError(f"unknown topology {name!r}")
        topology = build_topology(name, n, DEFAULT_ROUNDS)
        fm = _fm_for_task(registry, task)
        specs = []
        for i in range(n):
            if i == 0 and fm is not None:
                specs.append(
                    AgentSpec(
                        agent_id=f"agent-{i}",
                        chat_backend=chat,
                        eywa=True,
                        fm_backend=fm,
                        control_policy="always-invoke",
                    )
                )
            else:
                specs.append(AgentSpec(agent_id=f"agent-{i}", chat_backend=chat))
        return run_mas(task, topology, specs, registry)
    if base == "orchestra":
        space = ConfigSpace(
            llm_pool=tuple(registry.by_kind(KIND_CHAT)),
            fm_pool=tuple(registry.by_kind(KIND_TS) + registry.by_kind(KIND_TAB)),
        )
        planner = "planner" if "planner" in registry else chat
        return run_orchestra(task, space, planner, registry)
    raise HarnessError(f"unknown system selector {config.system!r}")


def _instance_record(
    index: int, task: TaskInstance, config: RunConfig, registry: BackendRegistry
) -> dict:
    start = time.perf_counter()
    try:
        outcome = _run_system(task, config, registry)
    except Exception as exc:  # per-instance failures are recorded, never fatal
        return {
            "index": index,
            "system": config.system,
            "domain": task.domain,
            "parent_domain": task.parent_domain,
            "task": task.task,
            "final_answer": "",
            "utility": 0.0,
            "stage": "failed",
            "status": "error",
            "cause": str(exc),
            "retries": 0,
            "input_tokens": 0,
            "output_tokens": 0,
            "wall_clock_ms": int((time.perf_counter() - start) * 1000),
            "orchestra_config": None,
        }
    score, cause = score_outcome(task, outcome)
    trace = outcome.trace
    return {
        "index": index,
        "system": config.system,
        "domain": task.domain,
        "parent_domain": task.parent_domain,
        "task": task.task,
        "final_answer": outcome.final_answer,
        "utility": score.value,
        "stage": score.stage,
        "status": outcome.status,
        "cause": cause,
        "retries": outcome.attempt - 1,
        "input_tokens": sum(u.input_tokens for u in trace.usage_records),
        "output_tokens": sum(u.output_tokens for u in trace.usage_records),
        "wall_clock_ms": int((time.perf_counter() - start) * 1000),
        "orchestra_config": trace.orchestra_config,
    }


def _slice_summaries(records: list[dict]) -> dict:
    def summarize(selected: list[dict]) -> dict | None:
        if not selected:
            return None
        summary = aggregate([r["utility"] for r in selected])
        return {
            "mean_utility": summary.mean_utility,
            "sample_std": summary.sample_std,
            "n": summary.n,
            "mean_wall_clock_ms": sum(r["wall_clock_ms"] for r in selected) / len(selected),
            "total_tokens": sum(r["input_tokens"] + r["output_tokens"] for r in selected),
        }

    return {
        "sub-domain": {
            d: summarize([r for r in records if r["domain"] == d]) for d in SUB_DOMAINS
        },
        "parent-domain": {
            d: summarize([r for r in records if r["parent_domain"] == d])
            for d in PARENT_DOMAINS
        },
    }


def run(config: RunConfig, registry: BackendRegistry | None = None) -> RunReport:
    """Execute the selected system on every benchmark instance, score,
    aggregate, and (optionally) write the report JSON."""
    bench = load_benchmark(config.bench_path)
    if registry is None:
        if config.registry_path is None:
            raise HarnessError("no registry given")
        registry = registry_from_file(config.registry_path)
    tasks = list(enumerate(bench.instances))
    if config.workers == 1:
        records = [_instance_record(i, t, config, registry) for i, t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(
                pool.map(lambda it: _instance_record(it[0], it[1], config, registry), tasks)
            )
    records.sort(key=lambda r: r["index"])
    overall = aggregate([r["utility"] for r in records])
    report = RunReport(
        header={
            "bench": config.bench_path,
            "system": config.system,
            "workers": config.workers,
            "seed": config.seed,
            "repeats": config.repeats,
            "n_instances": len(records),
        },
        records=records,
        slices=_slice_summaries(records),
        overall={
            "mean_utility": overall.mean_utility,
            "sample_std": overall.sample_std,
            "n": overall.n,
            "total_tokens": sum(
                r["input_tokens"] + r["output_tokens"] for r in records
            ),
            "total_wall_clock_ms": sum(r["wall_clock_ms"] for r in records),
        },
    )
    if config.out_path:
        Path(config.out_path).write_text(
            json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    return report


def score_predictions_file(pred_path: str, bench_path: str) -> dict:
    """Score a JSON-Lines predictions file ({"index": i, "prediction": s})
    against a benchmark; returns per-instance and per-slice JSON."""
    bench = load_benchmark(bench_path)
    predictions: dict[int, str] = {}
    with open(pred_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            predictions[int(obj["index"])] = str(obj["prediction"])
    records = []
    for i, task in enumerate(bench.instances):
        if i in predictions:
            score, cause = score_prediction(task, predictions[i])
        else:
            score, cause = UtilityScore(value=0.0, stage="failed"), "missing prediction"
        records.append(
            {
                "index": i,
                "domain": task.domain,
                "parent_domain": task.parent_domain,
                "task": task.task,
                "utility": score.value,
                "stage": score.stage,
                "cause": cause,
                "input_tokens": 0,
                "output_tokens": 0,
                "wall_clock_ms": 0,
            }
        )
    overall = aggregate([r["utility"] for r in records])
    return {
        "records": records,
        "slices": _slice_summaries(records),
        "overall": {
            "mean_utility": overall.mean_utility,
            "sample_std": overall.sample_std,
            "n": overall.n,
        },
    }


def report_table(report: RunReport | dict) -> tuple[str, str]:
    """Render the per-domain table (utility / time / tokens lines) plus a
    CSV mirror.  Empty slices render as an em-dash."""
    data = report.to_json() if isinstance(report, RunReport) else report
    records = data["records"]
    system = data.get("header", {}).get("system", "system")
    columns = list(SUB_DOMAINS) + ["overall"]

    def cells(metric: str) -> list[str]:
        out = []
        for domain in SUB_DOMAINS:
            selected = [r for r in records if r["domain"] == domain]
            if not selected:
                out.append("—")
            elif metric == "utility":
                out.append(f"{sum(r['utility'] for r in selected) / len(selected):.4f}")
            elif metric == "time_ms":
                out.append(
                    f"{sum(r['wall_clock_ms'] for r in selected) / len(selected):.1f}"
                )
            else:
                out.append(
                    str(sum(r["input_tokens"] + r["output_tokens"] for r in selected))
                )
        if metric == "utility":
            out.append(f"{sum(r['utility'] for r in records) / len(records):.4f}")
        elif metric == "time_ms":
            out.append(f"{sum(r['wall_clock_ms'] for r in records) / len(records):.1f}")
        else:
            out.append(str(sum(r["input_tokens"] + r["output_tokens"] for r in records)))
        return out

    rows = [
        ("utility", cells("utility")),
        ("time_ms", cells("time_ms")),
        ("tokens", cells("tokens")),
    ]
    width = max(len(c) for c in columns) + 2
    header = f"{system:<16}" + "".join(f"{c:>{width}}" for c in columns)
    lines = [header]
    for name, values in rows:
        lines.append(f"{name:<16}" + "".join(f"{v:>{width}}" for v in values))
    table = "\n".join(lines)

    csv_lines = ["system,metric," + ",".join(columns)]
    for name, values in rows:
        csv_lines.append(f"{system},{name}," + ",".join(v if v != "—" else "" for v in values))
    return table, "\n".join(csv_lines) + "\n"
