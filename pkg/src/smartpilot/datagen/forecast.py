"""Synthetic production-forecasting series with exogenous structure.

target(t) = feature_weight * raw_material(t) + ar_weight * target(t-1) + noise,
where raw_material is a plateaued series with seeded level shifts. The shifts
are what make the structured features informative: a history-only model cannot
anticipate them, a feature-infused one can.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from smartpilot.foresight import HOUR_MS, ForecastSeries, StructuredFeatures

FEATURE_NAMES = ("raw_material", "ambient_temp")
_PRODUCT_NAMES = ("toy_rocket", "sealant_a", "sealant_b")


def product_names(n: int) -> Tuple[str, ...]:
    names = list(_PRODUCT_NAMES[:n])
    while len(names) < n:
        names.append(f"product_{len(names)}")
    return tuple(names)


@dataclass
class ForecastGenConfig:
    """Knobs for the forecasting-series generator."""

    seed: int = 7
    n_products: int = 3
    n_points: int = 360
    feature_weight: float = 1.0
    ar_weight: float = 0.75
    noise_sigma: float = 0.3
    n_level_shifts: int = 8
    period_ms: int = HOUR_MS

    def __post_init__(self):
        if self.n_products < 1:
            raise ValueError("n_products must be positive")
        if self.n_points < 30:
            raise ValueError("n_points must be >= 30")
        if not 0.0 <= self.ar_weight < 1.0:
            raise ValueError("ar_weight must lie in [0, 1)")
        if self.feature_weight < 0 or self.noise_sigma < 0:
            raise ValueError("feature_weight and noise_sigma must be >= 0")
        if self.n_level_shifts < 0 or self.n_level_shifts > self.n_points // 4:
            raise ValueError("n_level_shifts must be in [0, n_points / 4]")


@dataclass(frozen=True)
class ForecastMetadata:
    """Generation constants, documented per contract."""

    feature_weight: float
    ar_weight: float
    noise_sigma: float
    shift_indices: Dict[str, Tuple[int, ...]]
    feature_names: Tuple[str, ...] = FEATURE_NAMES


@dataclass
class ForecastBundle:
    products: Dict[str, Tuple[ForecastSeries, StructuredFeatures]]
    metadata: ForecastMetadata


def _raw_material(rng: np.random.Generator, cfg: ForecastGenConfig) -> Tuple[np.ndarray, Tuple[int, ...]]:
    n = cfg.n_points
    if cfg.n_level_shifts:
        candidates = np.arange(10, n - 5)
        shifts = np.sort(rng.choice(candidates, size=cfg.n_level_shifts, replace=False))
    else:
        shifts = np.array([], dtype=int)
    levels = rng.uniform(8.0, 16.0, size=cfg.n_level_shifts + 1)
    raw = np.empty(n)
    bounds = [0, *shifts.tolist(), n]
    for k in range(len(bounds) - 1):
        raw[bounds[k]:bounds[k + 1]] = levels[k]
    raw = raw + rng.normal(0.0, 0.15, size=n)
    return raw, tuple(int(s) for s in shifts)


def gen_forecast(cfg: ForecastGenConfig) -> ForecastBundle:
    """Deterministic per-product (series, features) pairs."""
    rng = np.random.default_rng(cfg.seed)
    names = product_names(cfg.n_products)
    products: Dict[str, Tuple[ForecastSeries, StructuredFeatures]] = {}
    shift_indices: Dict[str, Tuple[int, ...]] = {}
    t0 = 1_600_000_000_000
    for pid in names:
        raw, shifts = _raw_material(rng, cfg)
        ambient = rng.normal(22.0, 1.5, size=cfg.n_points)
        target = np.empty(cfg.n_points)
        steady = cfg.feature_weight * raw[0] / (1.0 - cfg.ar_weight) if cfg.ar_weight else cfg.feature_weight * raw[0]
        prev = steady
        for t in range(cfg.n_points):
            prev = (cfg.feature_weight * raw[t] + cfg.ar_weight * prev
                    + rng.normal(0.0, cfg.noise_sigma))
            target[t] = prev
        target = np.maximum(target, 0.0)
        series = ForecastSeries(
            product_id=pid,
            values=target,
            period_ms=cfg.period_ms,
            timestamps=tuple(t0 + k * cfg.period_ms for k in range(cfg.n_points)),
        )
        feats = StructuredFeatures(names=FEATURE_NAMES,
                                   matrix=np.stack([raw, ambient], axis=1))
        products[pid] = (series, feats)
        shift_indices[pid] = shifts
    metadata = ForecastMetadata(
        feature_weight=cfg.feature_weight,
        ar_weight=cfg.ar_weight,
        noise_sigma=cfg.noise_sigma,
        shift_indices=shift_indices,
    )
    return ForecastBundle(products=products, metadata=metadata)
