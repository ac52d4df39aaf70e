"""Run two systems over the bundled desk benchmark and compare the
per-domain report tables: a single specialist-coupled agent vs a
three-agent debate.

Run with: python demos/03_benchmark_run.py
"""

import tempfile
from pathlib import Path

from eywa.backends import (
    BackendRegistry,
    LookupTabularPredictor,
    RelayChatBackend,
    SeasonalNaiveForecaster,
)
from eywa.desk import write_desk_benchmark
from eywa.harness import RunConfig, report_table, run


def registry():
    return BackendRegistry(
        [
            RelayChatBackend("relay-llm"),
            SeasonalNaiveForecaster("seasonal-naive"),
            LookupTabularPredictor("lookup-tab"),
        ]
    )


with tempfile.TemporaryDirectory() as tmp:
    bench = str(write_desk_benchmark(Path(tmp) / "desk.jsonl"))
    for system in ("eywa-agent", "mas:debate"):
        report = run(RunConfig(bench_path=bench, system=system), registry=registry())
        print(report_table(report)[0])
        print(
            f"overall utility {report.overall['mean_utility']:.4f}, "
            f"{report.overall['total_tokens']} tokens\n"
        )
