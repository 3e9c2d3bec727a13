"""Production-forecasting agent: stacked LSTMs with optional feature infusion."""

from .io import format_forecast_report, load_forecast_dataset, save_forecast_dataset
from .model import (
    DEFAULT_LOOKBACK,
    ForecastModel,
    build_forecaster,
    evaluate,
    forecast_next,
    improvement,
    train_forecaster,
)
from .types import HOUR_MS, ForecastPoint, ForecastResult, ForecastSeries, NormParams, StructuredFeatures

__all__ = [
    "DEFAULT_LOOKBACK",
    "HOUR_MS",
    "ForecastModel",
    "ForecastPoint",
    "ForecastResult",
    "ForecastSeries",
    "NormParams",
    "StructuredFeatures",
    "build_forecaster",
    "evaluate",
    "forecast_next",
    "format_forecast_report",
    "improvement",
    "load_forecast_dataset",
    "save_forecast_dataset",
    "train_forecaster",
]
