"""Predictors behind the served models.

The guaranteed fallbacks keep the server testable offline: seasonal-naive
for series, mean/mode of the observed targets for tables.  Wrapping a
real pretrained model is an installation concern — register a ServedModel
whose predictor honors the same shape contracts.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from statistics import fmean
from typing import Callable, Sequence

MASK_TOKEN = "__MASK__"

KIND_TS = "ts-fm"
KIND_TAB = "tab-fm"


class PredictorError(ValueError):
    """Invalid predictor input; surfaces as a ``backend`` wire error."""


@dataclass(frozen=True)
class ServedModel:
    backend_id: str
    kind: str  # ts-fm | tab-fm
    predictor: Callable
    description: str = ""

    def descriptor(self) -> dict:
        capabilities = (
            ["forecast"] if self.kind == KIND_TS else ["tab-classification", "tab-regression"]
        )
        return {
            "backend_id": self.backend_id,
            "kind": self.kind,
            "capabilities": capabilities,
            "endpoint": None,
            "description": self.description,
        }


def predict_series(
    values: Sequence[float], horizon: int, config: dict | None = None
) -> list[float]:
    """Seasonal-naive point forecast: repeat the last full period.

    ``config["period"]`` defaults to 2, clipped to the series length, so
    a period-2 alternating history continues its alternation and a
    constant history stays constant.
    """
    config = config or {}
    if not values:
        raise PredictorError("empty series")
    if not isinstance(horizon, int) or horizon < 1:
        raise PredictorError("horizon must be an integer >= 1")
    for v in values:
        if not math.isfinite(v):
            raise PredictorError("non-finite series value")
    period = config.get("period", 2)
    if not isinstance(period, int) or period < 1:
        raise PredictorError(f"invalid period {period!r}")
    period = min(period, len(values))
    season = list(values[-period:])
    return [season[i % period] for i in range(horizon)]


def predict_last_value(
    values: Sequence[float], horizon: int, config: dict | None = None
) -> list[float]:
    """Persistence forecast: repeat the final observation."""
    if not values:
        raise PredictorError("empty series")
    if not isinstance(horizon, int) or horizon < 1:
        raise PredictorError("horizon must be an integer >= 1")
    return [float(values[-1])] * horizon


def predict_tabular(
    columns: Sequence[str],
    rows: Sequence[Sequence[str]],
    target_column: str,
    config: dict | None = None,
) -> list[str]:
    """One prediction per masked target row, in masked-row order.

    Fallback rule: mean of the observed targets when they all parse as
    numbers, otherwise their mode.
    """
    if target_column not in columns:
        raise PredictorError(f"unknown target column {target_column!r}")
    ti = list(columns).index(target_column)
    width = len(columns)
    observed: list[str] = []
    masked: list[int] = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise PredictorError(f"ragged row {i}")
        if row[ti] == MASK_TOKEN:
            masked.append(i)
        else:
            observed.append(row[ti])
    if not masked:
        raise PredictorError("no masked rows to predict")
    if not observed:
        raise PredictorError("no observed target rows")
    fallback = _fallback_value(observed)
    # Exact feature-row lookup first, fallback otherwise.
    features = {}
    for i, row in enumerate(rows):
        if i not in masked:
            key = tuple(c for j, c in enumerate(row) if j != ti)
            features.setdefault(key, row[ti])
    predictions = []
    for i in masked:
        key = tuple(c for j, c in enumerate(rows[i]) if j != ti)
        predictions.append(features.get(key, fallback))
    return predictions


def _fallback_value(observed: Sequence[str]) -> str:
    try:
        mean = fmean(float(v) for v in observed)
    except ValueError:
        return Counter(observed).most_common(1)[0][0]
    if mean == int(mean) and abs(mean) < 1e15:
        return str(int(mean))
    return repr(mean)


MODEL_BUILDERS: dict[str, Callable[[], ServedModel]] = {
    "seasonal-naive": lambda: ServedModel(
        backend_id="seasonal-naive",
        kind=KIND_TS,
        predictor=predict_series,
        description="seasonal-naive forecaster (default period 2)",
    ),
    "last-value": lambda: ServedModel(
        backend_id="last-value",
        kind=KIND_TS,
        predictor=predict_last_value,
        description="persistence forecaster",
    ),
    "mean-mode-tab": lambda: ServedModel(
        backend_id="mean-mode-tab",
        kind=KIND_TAB,
        predictor=predict_tabular,
        description="exact-match lookup with mean/mode fallback",
    ),
}


def default_models(names: Sequence[str] | None = None) -> list[ServedModel]:
    names = list(names) if names else ["seasonal-naive", "mean-mode-tab"]
    models = []
    for name in names:
        if name not in MODEL_BUILDERS:
            raise PredictorError(
                f"unknown model {name!r}; available: {sorted(MODEL_BUILDERS)}"
            )
        models.append(MODEL_BUILDERS[name]())
    return models
