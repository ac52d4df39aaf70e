"""A 12-instance hand-checkable benchmark used by the test and
acceptance suites: 4 natural-language, 4 forecast, 4 tabular tasks."""

from __future__ import annotations

from pathlib import Path

from eywa.bench import (
    BenchmarkSet,
    TASK_FORECAST,
    TASK_NL,
    TASK_TAB_CLS,
    TASK_TAB_REG,
    TaskInstance,
    save_benchmark,
)


def _series_csv(values, start: int = 0) -> str:
    lines = ["timestamp,value"]
    for i, v in enumerate(values):
        lines.append(f"{start + i},{v}")
    return "\n".join(lines)


def desk_benchmark() -> BenchmarkSet:
    instances = (
        TaskInstance(
            domain="material",
            task=TASK_NL,
            description="Recall a chemical symbol.",
            output_size=100,
            input="What is the chemical symbol for gold?",
            label="Au",
        ),
        TaskInstance(
            domain="biology",
            task=TASK_NL,
            description="Recall a basic genetics fact.",
            output_size=100,
            input="How many chromosomes are in a human somatic cell?",
            label="46",
        ),
        TaskInstance(
            domain="economy",
            task=TASK_NL,
            description="Expand an economics acronym.",
            output_size=100,
            input="What does GDP stand for?",
            label="gross domestic product",
        ),
        TaskInstance(
            domain="space",
            task=TASK_NL,
            description="Recall a solar-system fact.",
            output_size=100,
            input="Which planet is third from the Sun?",
            label="Earth",
        ),
        TaskInstance(
            domain="energy",
            task=TASK_FORECAST,
            description="Forecast a flat load series.",
            output_size=2,
            input=_series_csv([5, 5, 5, 5, 5, 5, 5, 5]),
            label=_series_csv([5, 5], start=8),
        ),
        TaskInstance(
            domain="infrastructure",
            task=TASK_FORECAST,
            description="Forecast a period-2 traffic series.",
            output_size=2,
            input=_series_csv([1, 9, 1, 9, 1, 9, 1, 9]),
            label=_series_csv([1, 9], start=8),
        ),
        TaskInstance(
            domain="economy",
            task=TASK_FORECAST,
            description="Forecast a rising price series.",
            output_size=2,
            input=_series_csv([1, 2, 3, 4, 5, 6, 7, 8]),
            label=_series_csv([9, 10], start=8),
        ),
        TaskInstance(
            domain="clinic",
            task=TASK_FORECAST,
            description="Forecast an alternating vitals series.",
            output_size=2,
            input=_series_csv([2, 4, 2, 4, 2, 4]),
            label=_series_csv([2, 4], start=6),
        ),
        TaskInstance(
            domain="drug",
            task=TASK_TAB_CLS,
            description="Classify compound activity; masked target cells must be predicted.",
            output_size=2,
            input=(
                "dose,response\n"
                "low,inactive\n"
                "low,inactive\n"
                "high,active\n"
                "low,__MASK__\n"
                "high,__MASK__"
            ),
            label="inactive\nactive",
        ),
        TaskInstance(
            domain="business",
            task=TASK_TAB_CLS,
            description="Classify customer churn; masked target cells must be predicted.",
            output_size=1,
            input=(
                "plan,churn\n"
                "basic,yes\n"
                "basic,yes\n"
                "premium,no\n"
                "basic,__MASK__"
            ),
            label="yes",
        ),
        TaskInstance(
            domain="material",
            task=TASK_TAB_REG,
            description="Predict compressive strength; masked target cells must be predicted.",
            output_size=2,
            input=(
                "mix,strength\n"
                "a,2\n"
                "b,4\n"
                "a,__MASK__\n"
                "b,__MASK__"
            ),
            label="2\n4",
        ),
        TaskInstance(
            domain="clinic",
            task=TASK_TAB_REG,
            description="Predict a dosage value; masked target cells must be predicted.",
            output_size=1,
            input=(
                "weight,dose\n"
                "60,6\n"
                "80,8\n"
                "70,__MASK__"
            ),
            label="7",
        ),
    )
    return BenchmarkSet(instances=instances, source_path="<desk>")


def write_desk_benchmark(path: str | Path) -> Path:
    path = Path(path)
    save_benchmark(desk_benchmark(), path)
    return path
