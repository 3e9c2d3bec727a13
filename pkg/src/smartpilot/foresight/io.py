"""Forecast dataset files and the evaluation report.

Dataset file (CSV): timestamp,product_id,target,<feature name>...
Rows for one product appear consecutively in period order; several products
may share a file. Values are stored via repr for bit-exact round trips.
"""

from __future__ import annotations

import csv

import numpy as np

from ..kernel import InputError
from .model import improvement
from .types import ForecastResult, ForecastSeries, StructuredFeatures


def save_forecast_dataset(path, per_product: dict) -> None:
    """per_product maps product_id -> (ForecastSeries, StructuredFeatures)."""
    first = next(iter(per_product.values()))
    names = list(first[1].names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "product_id", "target"] + names)
        for pid, (series, feats) in per_product.items():
            if list(feats.names) != names:
                raise InputError("all products must share one feature schema")
            for i in range(len(series)):
                w.writerow(
                    [int(series.timestamps[i]), pid, repr(float(series.values[i]))]
                    + [repr(float(v)) for v in feats.matrix[i]]
                )


def load_forecast_dataset(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"empty forecast dataset {path}")
    names = tuple(rows[0][3:])
    buckets: dict = {}
    for row in rows[1:]:
        ts, pid, target = int(row[0]), row[1], float(row[2])
        feats = [float(v) for v in row[3:]]
        buckets.setdefault(pid, []).append((ts, target, feats))
    out = {}
    for pid, items in buckets.items():
        series = ForecastSeries(
            pid,
            np.array([t for _, t, _ in items]),
            period_ms=(items[1][0] - items[0][0]) if len(items) > 1 else 3_600_000,
            timestamps=np.array([ts for ts, _, _ in items]),
        )
        feats = StructuredFeatures(names, np.array([f for _, _, f in items]))
        out[pid] = (series, feats)
    return out


def format_forecast_report(per_product: dict) -> str:
    """per_product maps product_id -> (base: ForecastResult, kil: ForecastResult)."""
    lines = [
        f"{'product':<16}{'MAE base':>10}{'RMSE base':>11}{'MAE kil':>10}{'RMSE kil':>11}{'improvement':>13}",
    ]
    for pid in sorted(per_product):
        base, kil = per_product[pid]
        imp = improvement(base, kil)
        imp_s = "undefined" if imp is None else f"{imp:.2f}%"
        lines.append(
            f"{pid:<16}{base.mae:>10.4f}{base.rmse:>11.4f}{kil.mae:>10.4f}{kil.rmse:>11.4f}{imp_s:>13}"
        )
    return "\n".join(lines) + "\n"
