"""Forecaster tests: FD oracle over the recurrent+concat graph, constant and
offset metric oracles, clamping, architecture contracts, improvement rows.
"""

import numpy as np
import pytest

from smartpilot import foresight as FS
from smartpilot.foresight.model import _backward, _forward, _make_windows
from smartpilot.kernel import InputError, Mse, TrainConfig

LOOKBACK = 6


def make_series(rng, n=40, pid="prod"):
    return FS.ForecastSeries(pid, rng.uniform(1.0, 50.0, size=n))


def make_feats(rng, n=40, d=2):
    return FS.StructuredFeatures(tuple(f"f{i}" for i in range(d)), rng.uniform(0.0, 5.0, size=(n, d)))


def test_forecaster_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    series = make_series(rng, n=20)
    feats = make_feats(rng, n=20)
    model = FS.build_forecaster(series, feats, kil=True, lookback=LOOKBACK, seed=3)
    X, Fm, Y, _ = _make_windows(model, series, feats)
    X, Fm, Y = X[:3], Fm[:3], Y[:3]
    loss = Mse()
    out, caches = _forward(model, X, Fm, keep=True)
    _, d_out = loss.value_and_grad(out, Y)
    grads = _backward(model, caches, d_out)

    h = 1e-6
    for (branch, li, name), g in grads.items():
        mp = model.rec if branch == "rec" else model.head
        tensor = mp.layers[li][1] if name == "weight" else mp.layers[li][2]
        flat_g = np.asarray(g).reshape(-1)
        stride = max(1, flat_g.size // 25)  # subsample large LSTM tensors
        for k in range(0, flat_g.size, stride):
            orig = tensor.values[k]
            tensor.values[k] = orig + h
            up = loss.value(_forward(model, X, Fm)[0], Y)
            tensor.values[k] = orig - h
            down = loss.value(_forward(model, X, Fm)[0], Y)
            tensor.values[k] = orig
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), abs(flat_g[k]), 1e-2)
            assert abs(fd - flat_g[k]) / denom < 1e-4, (branch, li, name, k)


def test_constant_series_forecast_near_constant():
    series = FS.ForecastSeries("toy", np.full(60, 30.0))
    cfg = TrainConfig(learning_rate=1e-2, epochs=3, batch_size=16)
    model = FS.train_forecaster(series, None, kil=False, config=cfg, lookback=LOOKBACK, seed=1)
    point = FS.forecast_next(model, np.full(LOOKBACK, 30.0))
    assert abs(point.value - 30.0) <= 1.0
    result = FS.evaluate(model, series, None)
    assert result.mae <= 1.0


def test_kil_widens_dense_input():
    rng = np.random.default_rng(2)
    series = make_series(rng)
    feats = make_feats(rng)
    base = FS.build_forecaster(series, None, kil=False, lookback=LOOKBACK, seed=7)
    kil = FS.build_forecaster(series, feats, kil=True, lookback=LOOKBACK, seed=7)
    assert kil.parameter_count() > base.parameter_count()
    assert kil.parameter_count() - base.parameter_count() == FS.model.DENSE_WIDTH * feats.dim


def test_zero_epochs_equals_initialization():
    rng = np.random.default_rng(3)
    series = make_series(rng)
    cfg = TrainConfig(epochs=0)
    trained = FS.train_forecaster(series, None, kil=False, config=cfg, lookback=LOOKBACK, seed=9)
    init = FS.build_forecaster(series, None, kil=False, lookback=LOOKBACK, seed=9)
    assert trained == init


def test_short_series_error_states_minimum():
    rng = np.random.default_rng(4)
    series = make_series(rng, n=LOOKBACK)
    with pytest.raises(InputError, match="minimum"):
        FS.build_forecaster(series, None, kil=False, lookback=LOOKBACK)


def test_forecast_clamps_negative_output():
    series = FS.ForecastSeries("p", np.linspace(0, 10, 40))
    model = FS.build_forecaster(series, None, kil=False, lookback=LOOKBACK, seed=5)
    _, W, b = model.head.layers[1]
    W.values[:] = 0.0
    b.values[:] = -50.0  # raw normalized output -50 -> unscaled far below zero
    point = FS.forecast_next(model, series.values[:LOOKBACK])
    assert point.value == 0.0 and point.clamped


def test_forecast_next_is_pure():
    rng = np.random.default_rng(6)
    series = make_series(rng)
    feats = make_feats(rng)
    model = FS.build_forecaster(series, feats, kil=True, lookback=LOOKBACK, seed=11)
    window = series.values[-LOOKBACK:]
    entry = feats.matrix[-1]
    a = FS.forecast_next(model, window, entry)
    b = FS.forecast_next(model, window, entry)
    assert a == b
    with pytest.raises(InputError):
        FS.forecast_next(model, window[:-1], entry)


def zeroed_head_model(series, bias):
    model = FS.build_forecaster(series, None, kil=False, lookback=LOOKBACK, seed=8)
    _, W, b = model.head.layers[1]
    W.values[:] = 0.0
    b.values[:] = bias
    return model


def test_evaluate_exact_match_gives_zero_errors():
    series = FS.ForecastSeries("c", np.full(40, 12.5))
    model = zeroed_head_model(series, 0.0)  # output 0 normalized == the constant
    r = FS.evaluate(model, series, None)
    assert r.mae == 0.0 and r.rmse == 0.0
    assert np.array_equal(r.forecasts, r.actuals)


def test_evaluate_constant_offset():
    series = FS.ForecastSeries("c", np.full(40, 12.5))
    model = zeroed_head_model(series, 2.0)  # span 0: unscale(2) = 12.5 + 2
    r = FS.evaluate(model, series, None)
    assert r.mae == 2.0 and r.rmse == 2.0


def test_mae_never_exceeds_rmse():
    rng = np.random.default_rng(10)
    for seed in range(5):
        series = make_series(rng, n=50)
        model = FS.build_forecaster(series, None, kil=False, lookback=LOOKBACK, seed=seed)
        r = FS.evaluate(model, series, None)
        assert r.mae <= r.rmse + 1e-12


def test_training_is_deterministic():
    rng = np.random.default_rng(11)
    series = make_series(rng, n=50)
    feats = make_feats(rng, n=50)
    cfg = TrainConfig(learning_rate=5e-3, epochs=2, batch_size=8)
    a = FS.train_forecaster(series, feats, kil=True, config=cfg, lookback=LOOKBACK, seed=13)
    b = FS.train_forecaster(series, feats, kil=True, config=cfg, lookback=LOOKBACK, seed=13)
    assert a == b
    ra = FS.evaluate(a, series, feats)
    rb = FS.evaluate(b, series, feats)
    assert np.array_equal(ra.forecasts, rb.forecasts)
    assert ra.mae == rb.mae and ra.rmse == rb.rmse


# ------------------------------------------------------------- improvement


def test_improvement_reference_rows():
    # Aggregates straight from the published comparison table.
    assert round(FS.improvement((24.0, 30.0), (28.0, 30.0)), 2) == 66.67
    assert round(FS.improvement((51.0, 30.0), (43.0, 30.0)), 2) == 38.10  # bias +21 vs +13
    assert FS.improvement((-2.0, 30.0), (8.0, 30.0)) == 31.25  # bias -32 vs -22
    assert FS.improvement((30.0, 30.0), (31.0, 30.0)) is None


def test_improvement_accepts_forecast_results():
    base = FS.ForecastResult("p", np.array([24.0]), np.array([30.0]), 6.0, 6.0)
    kil = FS.ForecastResult("p", np.array([28.0]), np.array([30.0]), 2.0, 2.0)
    assert round(FS.improvement(base, kil), 2) == 66.67


def test_improvement_negative_when_kil_worse():
    assert FS.improvement((32.0, 30.0), (34.0, 30.0)) == -100.0


# ------------------------------------------------------------- persistence


def test_forecast_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    per_product = {
        "BRD": (make_series(rng, pid="BRD"), make_feats(rng)),
        "BRN": (make_series(rng, pid="BRN"), make_feats(rng)),
    }
    path = tmp_path / "forecast.csv"
    FS.save_forecast_dataset(path, per_product)
    loaded = FS.load_forecast_dataset(path)
    assert set(loaded) == {"BRD", "BRN"}
    for pid in per_product:
        s0, f0 = per_product[pid]
        s1, f1 = loaded[pid]
        assert np.array_equal(s0.values, s1.values)
        assert np.array_equal(s0.timestamps, s1.timestamps)
        assert f0.names == f1.names
        assert np.array_equal(f0.matrix, f1.matrix)


def test_report_includes_improvement_column():
    base = FS.ForecastResult("toy", np.array([24.0, 24.0]), np.array([30.0, 30.0]), 6.0, 6.0)
    kil = FS.ForecastResult("toy", np.array([28.0, 28.0]), np.array([30.0, 30.0]), 2.0, 2.0)
    text = FS.format_forecast_report({"toy": (base, kil)})
    assert "66.67%" in text
    assert "toy" in text and "MAE" in text
