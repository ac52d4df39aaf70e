"""Reference foundation-model server: real (or fallback) predictors for
time-series forecasting and tabular prediction behind the standard
``/v1/invoke`` + ``/v1/describe`` wire contract."""

from fm_server.predictors import (
    PredictorError,
    ServedModel,
    default_models,
    predict_series,
    predict_tabular,
)
from fm_server.app import FmServer, serve

__all__ = [
    "FmServer",
    "PredictorError",
    "ServedModel",
    "default_models",
    "predict_series",
    "predict_tabular",
    "serve",
]

__version__ = "0.1.0"
