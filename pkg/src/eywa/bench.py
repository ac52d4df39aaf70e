"""Benchmark data model: task schema, payload parsers, composition stats.

The benchmark is a JSON-Lines file, one object per task instance with
exactly six fields: domain, task, description, output_size, input, label.
Series and table payloads travel inside the ``input``/``label`` strings
as small CSV documents.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

MASK_TOKEN = "__MASK__"

TASK_NL = "nl-qa"
TASK_FORECAST = "forecast"
TASK_TAB_CLS = "tab-classification"
TASK_TAB_REG = "tab-regression"

TASK_TYPES = (TASK_NL, TASK_FORECAST, TASK_TAB_CLS, TASK_TAB_REG)

# Nine sub-domains, grouped under three parent domains.
PARENT_OF = {
    "material": "physical",
    "energy": "physical",
    "space": "physical",
    "biology": "life",
    "clinic": "life",
    "drug": "life",
    "economy": "social",
    "business": "social",
    "infrastructure": "social",
}

SUB_DOMAINS = tuple(PARENT_OF)
PARENT_DOMAINS = ("physical", "life", "social")

MODALITY_OF_TASK = {
    TASK_NL: "natural-language",
    TASK_FORECAST: "time-series",
    TASK_TAB_CLS: "tabular",
    TASK_TAB_REG: "tabular",
}

SCHEMA_FIELDS = ("domain", "task", "description", "output_size", "input", "label")


class BenchmarkError(ValueError):
    """Raised for malformed benchmark files or payloads."""


@dataclass(frozen=True)
class TaskInstance:
    domain: str
    task: str
    description: str
    output_size: int
    input: str
    label: str

    def __post_init__(self) -> None:
        if self.domain not in PARENT_OF:
            raise BenchmarkError(f"unknown domain {self.domain!r}")
        if self.task not in TASK_TYPES:
            raise BenchmarkError(f"unknown task type {self.task!r}")
        if not isinstance(self.output_size, int) or self.output_size < 0:
            raise BenchmarkError("output_size must be a non-negative integer")
        if self.task != TASK_NL and self.output_size < 1:
            raise BenchmarkError(
                f"output_size must be >= 1 for {self.task} tasks"
            )
        if not self.input:
            raise BenchmarkError("input must be non-empty")
        if not self.label:
            raise BenchmarkError("label must be non-empty")
        if self.task == TASK_FORECAST:
            gold = parse_series_csv(self.label)
            if len(gold.points) != self.output_size:
                raise BenchmarkError(
                    f"gold continuation has {len(gold.points)} points, "
                    f"expected output_size={self.output_size}"
                )

    @property
    def parent_domain(self) -> str:
        return PARENT_OF[self.domain]

    @property
    def modality(self) -> str:
        return MODALITY_OF_TASK[self.task]

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in SCHEMA_FIELDS}


@dataclass(frozen=True)
class BenchmarkSet:
    instances: tuple[TaskInstance, ...]
    source_path: str = ""

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


@dataclass(frozen=True)
class Series:
    """Ordered (timestamp, value) pairs; timestamps are opaque text tokens."""

    points: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise BenchmarkError("empty series")
        for ts, value in self.points:
            if not math.isfinite(value):
                raise BenchmarkError(f"non-finite value at timestamp {ts!r}")

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.points)

    @property
    def timestamps(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.points)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    target_column: str
    masked_rows: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.target_column not in self.columns:
            raise BenchmarkError(
                f"target column {self.target_column!r} not in header"
            )
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise BenchmarkError(
                    f"ragged row {i}: {len(row)} cells, expected {width}"
                )
        for i in self.masked_rows:
            if not 0 <= i < len(self.rows):
                raise BenchmarkError(f"masked row index {i} out of range")

    @property
    def target_index(self) -> int:
        return self.columns.index(self.target_column)

    def observed_targets(self) -> tuple[str, ...]:
        ti = self.target_index
        masked = set(self.masked_rows)
        return tuple(
            row[ti] for i, row in enumerate(self.rows) if i not in masked
        )


@dataclass(frozen=True)
class CompositionStats:
    counts: dict[str, int] = field(default_factory=dict)
    normalized_entropy: float = 0.0


def parse_series_csv(text: str) -> Series:
    """Parse a ``timestamp,value`` CSV payload into a Series."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "timestamp,value":
        raise BenchmarkError("missing 'timestamp,value' header")
    if len(lines) == 1:
        raise BenchmarkError("empty series")
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        ts, sep, raw = line.partition(",")
        if not sep:
            raise BenchmarkError(f"line {lineno}: expected 'timestamp,value'")
        try:
            value = float(raw)
        except ValueError:
            raise BenchmarkError(
                f"line {lineno}: non-numeric value {raw!r}"
            ) from None
        if not math.isfinite(value):
            raise BenchmarkError(f"line {lineno}: non-finite value")
        points.append((ts.strip(), value))
    return Series(points=tuple(points))


def serialize_series(series: Series) -> str:
    lines = ["timestamp,value"]
    for ts, value in series.points:
        lines.append(f"{ts},{format_number(value)}")
    return "\n".join(lines)


def format_number(value: float) -> str:
    """Render a float compactly; integers lose the trailing '.0'."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def parse_table_csv(
    text: str, target_column: str, mask_token: str = MASK_TOKEN
) -> Table:
    """Parse a CSV table payload; rows whose target cell equals
    ``mask_token`` are recorded as masked."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise BenchmarkError("empty table")
    columns = tuple(c.strip() for c in lines[0].split(","))
    if target_column not in columns:
        raise BenchmarkError(f"target column {target_column!r} not in header")
    width = len(columns)
    ti = columns.index(target_column)
    rows = []
    masked = []
    for i, line in enumerate(lines[1:]):
        cells = tuple(c.strip() for c in line.split(","))
        if len(cells) != width:
            raise BenchmarkError(
                f"ragged row {i}: {len(cells)} cells, expected {width}"
            )
        if cells[ti] == mask_token:
            masked.append(i)
        rows.append(cells)
    return Table(
        columns=columns,
        rows=tuple(rows),
        target_column=target_column,
        masked_rows=tuple(masked),
    )


def serialize_table(table: Table) -> str:
    lines = [",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(row))
    return "\n".join(lines)


def _category(instance: TaskInstance, axis: str) -> str:
    if axis == "parent-domain":
        return instance.parent_domain
    if axis == "sub-domain":
        return instance.domain
    if axis == "modality":
        return instance.modality
    raise BenchmarkError(f"unknown axis {axis!r}")


def composition_stats(
    instances: Sequence[TaskInstance], axis: str = "sub-domain"
) -> CompositionStats:
    """Category counts plus normalized Shannon entropy along one axis.

    Entropy is -sum(p ln p) / ln K over the K nonzero categories,
    defined as 0 when K == 1.
    """
    if not instances:
        raise BenchmarkError("empty instance sequence")
    counts = Counter(_category(t, axis) for t in instances)
    total = sum(counts.values())
    k = len(counts)
    if k == 1:
        h_n = 0.0
    else:
        h = -math.fsum((c / total) * math.log(c / total) for c in counts.values())
        h_n = h / math.log(k)
    return CompositionStats(counts=dict(counts), normalized_entropy=h_n)


def load_benchmark(path: str | Path) -> BenchmarkSet:
    """Load a JSON-Lines benchmark file into validated TaskInstances."""
    path = Path(path)
    if not path.exists():
        raise BenchmarkError(f"benchmark file not found: {path}")
    instances = []
    with path.open(encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BenchmarkError(f"record {i}: invalid JSON: {exc}") from None
            if not isinstance(record, dict):
                raise BenchmarkError(f"record {i}: expected a JSON object")
            missing = [f for f in SCHEMA_FIELDS if f not in record]
            if missing:
                raise BenchmarkError(
                    f"record {i}: missing fields {missing}"
                )
            extra = [f for f in record if f not in SCHEMA_FIELDS]
            if extra:
                raise BenchmarkError(f"record {i}: unknown fields {extra}")
            try:
                instances.append(TaskInstance(**record))
            except BenchmarkError as exc:
                raise BenchmarkError(f"record {i}: {exc}") from None
    if not instances:
        raise BenchmarkError(f"no records in {path}")
    return BenchmarkSet(instances=tuple(instances), source_path=str(path))


def save_benchmark(bench: BenchmarkSet | Iterable[TaskInstance], path: str | Path) -> None:
    """Write instances as JSON-Lines with the six schema fields."""
    instances = bench.instances if isinstance(bench, BenchmarkSet) else tuple(bench)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")
