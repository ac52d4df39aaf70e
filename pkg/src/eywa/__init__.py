"""Heterogeneous agent orchestration harness.

Couples chat language models with non-linguistic predictive models
(time-series forecasters, tabular predictors) behind a structured
invocation protocol, runs single-agent / multi-agent / planner-routed
systems over a multi-domain benchmark, and scores outputs with bounded
per-instance utilities and token-cost accounting.
"""

from eywa.bench import (
    BenchmarkSet,
    CompositionStats,
    Series,
    Table,
    TaskInstance,
    composition_stats,
    load_benchmark,
    parse_series_csv,
    parse_table_csv,
    serialize_series,
)
from eywa.metrics import (
    SliceSummary,
    UtilityScore,
    aggregate,
    score_natural_language,
    score_tabular,
    score_time_series,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSet",
    "CompositionStats",
    "Series",
    "Table",
    "TaskInstance",
    "composition_stats",
    "load_benchmark",
    "parse_series_csv",
    "parse_table_csv",
    "serialize_series",
    "SliceSummary",
    "UtilityScore",
    "aggregate",
    "score_natural_language",
    "score_tabular",
    "score_time_series",
]
