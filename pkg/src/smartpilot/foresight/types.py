"""Domain types for the production-forecasting agent."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..kernel import InputError

HOUR_MS = 3_600_000


@dataclass
class ForecastSeries:
    """Per-period production counts for one product."""

    product_id: str
    values: np.ndarray
    period_ms: int = HOUR_MS
    timestamps: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.timestamps is None:
            self.timestamps = np.arange(len(self.values), dtype=np.int64) * self.period_ms
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64).reshape(-1)
        if len(self.timestamps) != len(self.values):
            raise InputError("timestamps must align 1:1 with values")
        if np.any(self.values < 0):
            raise InputError("production values must be >= 0")
        if len(self.timestamps) > 1:
            steps = np.diff(self.timestamps)
            if np.any(steps <= 0) or np.any(steps != steps[0]):
                raise InputError("timestamps must increase by a constant period")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class StructuredFeatures:
    """Named exogenous features aligned 1:1 with the series periods."""

    names: tuple
    matrix: np.ndarray

    def __post_init__(self):
        self.names = tuple(str(n) for n in self.names)
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.names):
            raise InputError(
                f"feature matrix {self.matrix.shape} does not match {len(self.names)} names"
            )

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return len(self.names)


class ForecastPoint(NamedTuple):
    """One forecast with its clamp flag (negative raw outputs clamp to 0)."""

    value: float
    clamped: bool

    def __float__(self) -> float:
        return self.value


@dataclass
class ForecastResult:
    """Evaluation outcome over a test slice."""

    product_id: str
    forecasts: np.ndarray
    actuals: np.ndarray
    mae: float
    rmse: float

    def __post_init__(self):
        self.forecasts = np.asarray(self.forecasts, dtype=np.float64).reshape(-1)
        self.actuals = np.asarray(self.actuals, dtype=np.float64).reshape(-1)
        if self.forecasts.shape != self.actuals.shape:
            raise InputError("forecasts and actuals must have equal length")
        if self.mae > self.rmse + 1e-12:
            raise InputError(f"mae {self.mae} > rmse {self.rmse}")

    @property
    def avg_forecast(self) -> float:
        return float(self.forecasts.mean())

    @property
    def avg_actual(self) -> float:
        return float(self.actuals.mean())


@dataclass(frozen=True)
class NormParams:
    """Min-max scaling constants fit on the training split only."""

    t_min: float
    t_max: float
    f_min: tuple = ()
    f_max: tuple = ()

    def scale_target(self, v: np.ndarray) -> np.ndarray:
        span = self.t_max - self.t_min
        return (np.asarray(v, dtype=np.float64) - self.t_min) / (span if span > 0 else 1.0)

    def unscale_target(self, v: np.ndarray) -> np.ndarray:
        span = self.t_max - self.t_min
        return np.asarray(v, dtype=np.float64) * (span if span > 0 else 1.0) + self.t_min

    def scale_features(self, m: np.ndarray) -> np.ndarray:
        if not self.f_min:
            return np.asarray(m, dtype=np.float64)
        lo = np.asarray(self.f_min)
        span = np.asarray(self.f_max) - lo
        span = np.where(span > 0, span, 1.0)
        return (np.asarray(m, dtype=np.float64) - lo) / span
