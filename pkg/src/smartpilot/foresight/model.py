"""Forecaster: two stacked LSTMs over the target history, dense head.

With knowledge infusion (kil=true) the consolidated vector of the second
LSTM is concatenated with the forecast period's structured features before
the dense layers; without it the dense layers see the LSTM vector alone.
That concat breaks the kernel's sequential-stack assumption, so forward,
backward, and the training loop are composed here from layer primitives
(the baseline and KIL paths share every line except the concat, keeping the
comparison architecture-only).

Targets and features are min-max normalized with constants fit on the
training series; predictions are inverse-transformed before metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..kernel import (
    InputError,
    LayerSpec,
    ModelParams,
    Mse,
    NumericError,
    TrainConfig,
    build_model,
)
from ..kernel.layers import dense_backward, dense_forward, lstm_backward, lstm_forward
from ..kernel.optim import make_optimizer
from .types import ForecastPoint, ForecastResult, ForecastSeries, NormParams, StructuredFeatures

DEFAULT_LOOKBACK = 24
LSTM1_WIDTH = 64
LSTM2_WIDTH = 32
DENSE_WIDTH = 32

_REC_SEED_OFFSET = 0
_HEAD_SEED_OFFSET = 1


@dataclass
class ForecastModel:
    """Immutable trained snapshot: recurrent stack + dense head + scaling."""

    kil: bool
    lookback: int
    feat_dim: int
    rec: ModelParams
    head: ModelParams
    norm: NormParams
    product_id: str = ""

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ForecastModel)
            and (self.kil, self.lookback, self.feat_dim) == (other.kil, other.lookback, other.feat_dim)
            and self.rec == other.rec
            and self.head == other.head
            and self.norm == other.norm
        )

    def parameter_count(self) -> int:
        total = 0
        for mp in (self.rec, self.head):
            for _, W, b in mp.layers:
                total += W.values.size + b.values.size
        return total


def build_forecaster(
    series: ForecastSeries,
    feats: Optional[StructuredFeatures],
    kil: bool,
    lookback: int = DEFAULT_LOOKBACK,
    seed: int = 0,
) -> ForecastModel:
    """Initialize the model and fit normalization on the given (train) data."""
    n = len(series)
    if n < lookback + 1:
        raise InputError(f"series length {n} below minimum {lookback + 1} (lookback + 1)")
    feat_dim = 0
    if kil:
        if feats is None:
            raise InputError("kil=true requires structured features")
        if len(feats) != n:
            raise InputError("features must align 1:1 with the series")
        feat_dim = feats.dim
    t_min, t_max = float(series.values.min()), float(series.values.max())
    if kil:
        f_min = tuple(float(v) for v in feats.matrix.min(axis=0))
        f_max = tuple(float(v) for v in feats.matrix.max(axis=0))
    else:
        f_min = f_max = ()
    norm = NormParams(t_min, t_max, f_min, f_max)
    rec = build_model(
        [LayerSpec("lstm", 1, LSTM1_WIDTH), LayerSpec("lstm", LSTM1_WIDTH, LSTM2_WIDTH)],
        seed + _REC_SEED_OFFSET,
    )
    head = build_model(
        [
            LayerSpec("dense", LSTM2_WIDTH + feat_dim, DENSE_WIDTH, "tanh"),
            LayerSpec("dense", DENSE_WIDTH, 1, "identity"),
        ],
        seed + _HEAD_SEED_OFFSET,
    )
    return ForecastModel(kil, lookback, feat_dim, rec, head, norm, series.product_id)


def _layer(mp: ModelParams, i: int):
    spec, W, b = mp.layers[i]
    return spec, W.array(), b.array()


def _forward(model: ForecastModel, x: np.ndarray, feats: Optional[np.ndarray], keep: bool = False):
    """x [B, lookback, 1] normalized; feats [B, D] normalized (kil only)."""
    _, W1, b1 = _layer(model.rec, 0)
    _, W2, b2 = _layer(model.rec, 1)
    h1, c1 = lstm_forward(x, W1, b1)
    h2, c2 = lstm_forward(h1, W2, b2)
    vec = h2[:, -1, :]
    z = np.concatenate([vec, feats], axis=1) if model.kil else vec
    d1, Wd1, bd1 = _layer(model.head, 0)
    d2, Wd2, bd2 = _layer(model.head, 1)
    h, hc1 = dense_forward(z, Wd1, bd1, d1.activation)
    out, hc2 = dense_forward(h, Wd2, bd2, d2.activation)
    caches = (c1, c2, hc1, hc2, h2.shape) if keep else None
    return out, caches


def _backward(model: ForecastModel, caches, d_out: np.ndarray) -> dict:
    c1, c2, hc1, hc2, h2_shape = caches
    grads = {}
    d1spec, Wd1, _ = _layer(model.head, 0)
    d2spec, Wd2, _ = _layer(model.head, 1)
    dh, dW, db = dense_backward(d_out, Wd2, d2spec.activation, hc2)
    grads[("head", 1, "weight")], grads[("head", 1, "bias")] = dW, db
    dz, dW, db = dense_backward(dh, Wd1, d1spec.activation, hc1)
    grads[("head", 0, "weight")], grads[("head", 0, "bias")] = dW, db
    d_vec = dz[:, : LSTM2_WIDTH]  # feature-slice gradient falls on input data
    B, T, H = h2_shape
    dh_seq = np.zeros((B, T, H))
    dh_seq[:, -1, :] = d_vec
    _, W2, _ = _layer(model.rec, 1)
    dx2, dW, db = lstm_backward(dh_seq, W2, c2)
    grads[("rec", 1, "weight")], grads[("rec", 1, "bias")] = dW, db
    _, W1, _ = _layer(model.rec, 0)
    _, dW, db = lstm_backward(dx2, W1, c1)
    grads[("rec", 0, "weight")], grads[("rec", 0, "bias")] = dW, db
    return grads


def _make_windows(model: ForecastModel, series: ForecastSeries, feats: Optional[StructuredFeatures]):
    """All (window, feature row, target) triples after lookback alignment."""
    v = model.norm.scale_target(series.values)
    L = model.lookback
    n = len(v)
    if n < L + 1:
        raise InputError(f"series length {n} below minimum {L + 1} (lookback + 1)")
    idx = np.arange(L, n)
    X = np.stack([v[t - L : t] for t in idx])[:, :, None]
    Y = v[idx][:, None]
    Fm = None
    if model.kil:
        if feats is None or len(feats) != n:
            raise InputError("kil=true requires features aligned with the series")
        Fm = model.norm.scale_features(feats.matrix)[idx]
    return X, Fm, Y, idx


def train_forecaster(
    series: ForecastSeries,
    feats: Optional[StructuredFeatures],
    kil: bool,
    config: TrainConfig,
    lookback: int = DEFAULT_LOOKBACK,
    seed: int = 0,
) -> ForecastModel:
    """Fit the forecaster on one product's training series."""
    model = build_forecaster(series, feats, kil, lookback, seed)
    X, Fm, Y, _ = _make_windows(model, series, feats)
    loss = Mse()
    opt = make_optimizer(config.optimizer, config.learning_rate)
    n = X.shape[0]
    for _ in range(config.epochs):
        for start in range(0, n, config.batch_size):
            sl = slice(start, start + config.batch_size)
            fb = Fm[sl] if Fm is not None else None
            out, caches = _forward(model, X[sl], fb, keep=True)
            val, d_out = loss.value_and_grad(out, Y[sl])
            if not np.isfinite(val):
                raise NumericError(f"non-finite loss: {val}")
            grads = _backward(model, caches, d_out)
            params = {}
            for (branch, li, name) in grads:
                mp = model.rec if branch == "rec" else model.head
                _, W, b = mp.layers[li]
                params[(branch, li, name)] = (W if name == "weight" else b).values
            opt.step(params, {k: np.asarray(v).reshape(-1) for k, v in grads.items()})
    return model


def forecast_next(model: ForecastModel, window, feats_entry=None) -> ForecastPoint:
    """One-period-ahead forecast from a raw lookback slice; pure."""
    w = np.asarray(window, dtype=np.float64).reshape(-1)
    if w.shape[0] != model.lookback:
        raise InputError(f"window length {w.shape[0]} != lookback {model.lookback}")
    x = model.norm.scale_target(w)[None, :, None]
    fb = None
    if model.kil:
        if feats_entry is None:
            raise InputError("kil=true requires a structured-feature entry")
        f = np.asarray(feats_entry, dtype=np.float64).reshape(1, -1)
        if f.shape[1] != model.feat_dim:
            raise InputError(f"expected {model.feat_dim} features, got {f.shape[1]}")
        fb = model.norm.scale_features(f)
    out, _ = _forward(model, x, fb)
    raw = float(model.norm.unscale_target(out)[0, 0])
    if raw < 0:
        return ForecastPoint(0.0, True)
    return ForecastPoint(raw, False)


def evaluate(model: ForecastModel, series: ForecastSeries, feats: Optional[StructuredFeatures]) -> ForecastResult:
    """Walk the test slice one period at a time (batched under the hood)."""
    X, Fm, _, idx = _make_windows(model, series, feats)
    out, _ = _forward(model, X, Fm)
    raw = model.norm.unscale_target(out[:, 0])
    forecasts = np.maximum(raw, 0.0)
    actuals = series.values[idx]
    err = forecasts - actuals
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err * err).mean()))
    return ForecastResult(series.product_id, forecasts, actuals, mae, rmse)


def improvement(base, kil) -> Optional[float]:
    """Absolute-bias reduction percentage between two evaluation aggregates.

    Accepts ForecastResult or any pair-like (avg_forecast, avg_actual).
    Returns None when the baseline bias is exactly zero (undefined).
    """

    def bias(r) -> float:
        if hasattr(r, "avg_forecast"):
            return float(r.avg_forecast) - float(r.avg_actual)
        f, a = r
        return float(f) - float(a)

    e_base = abs(bias(base))
    e_kil = abs(bias(kil))
    if e_base == 0.0:
        return None
    return (e_base - e_kil) / e_base * 100.0
