"""Command-line entry point: generation, training, ablation, evaluation,
serving, replay, and ad-hoc questions.

Exit codes: 0 success, 1 validation error (bad flags, malformed inputs,
missing files), 2 runtime error. Option precedence is explicit flags over
config-file values over built-in defaults; the config file is JSON at
--config or $SMARTPILOT_CONFIG. Every run logs its seed and the hash of the
effective options, which together reproduce any artifact bit-exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from .kernel import InputError, TrainConfig

log = logging.getLogger("smartpilot")

CONFIG_ENV = "SMARTPILOT_CONFIG"
MANIFEST_NAME = "manifest.json"

# One knob set for both forecaster arms so the comparison stays
# architecture-only; mirrors the evaluation protocol of the test suite.
FORESIGHT_TRAIN = dict(learning_rate=5e-3, epochs=20, batch_size=16)
TRAIN_FRACTION = 0.8

_FLAG_KEYS = ("seed", "out", "data", "ontology", "agent", "variant",
              "rate", "port", "config", "facility")


class CliError(Exception):
    """Validation failure: maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the exit-code contract wants 1."""

    def error(self, message):
        raise CliError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="smartpilot", description=__doc__.splitlines()[0])
    p.add_argument("--config", help=f"JSON options file (default ${CONFIG_ENV})")
    sub = p.add_subparsers(dest="subcommand", metavar="subcommand")

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        # SUPPRESS keeps a top-level --config from being clobbered by the
        # subparser's default when the flag comes before the subcommand.
        sp.add_argument("--config", default=argparse.SUPPRESS,
                        help=f"JSON options file (default ${CONFIG_ENV})")
        return sp

    g = add("gen", "write datasets, ontology, corpus, and a replay stream")
    g.add_argument("--seed", type=int, help="generator seed (default 42)")
    g.add_argument("--out", help="output directory (required)")

    t = add("train", "train one agent and write its artifact")
    t.add_argument("--agent", choices=("predictx", "foresight"), help="which agent to train")
    t.add_argument("--variant", help="fusion variant for predictx (default P3)")
    t.add_argument("--data", help="directory written by gen")
    t.add_argument("--seed", type=int, help="training seed (default 0)")
    t.add_argument("--out", help="model checkpoint (predictx) or report path (foresight)")

    a = add("ablate", "train all fusion variants and write the comparison report")
    a.add_argument("--data", help="directory written by gen")
    a.add_argument("--seed", type=int, help="training seed (default 0)")
    a.add_argument("--out", help="report path; writes .json and .txt (default ablation_report)")

    e = add("eval", "score a trained fusion model on the held-out split")
    e.add_argument("model", help="checkpoint written by train")
    e.add_argument("--data", help="directory written by gen")
    e.add_argument("--out", help="metrics JSON path (default stdout)")

    s = add("serve", "run the REST/WS service")
    s.add_argument("model", help="checkpoint written by train")
    s.add_argument("--data", help="directory written by gen")
    s.add_argument("--ontology", help="ontology file overriding the generated one")
    s.add_argument("--port", type=int, help="listen port (default 8077)")
    s.add_argument("--facility", help="facility name (default from the dataset)")
    s.add_argument("--rate", type=float,
                   help="also stream the generated replay at RATE x real time")

    r = add("replay", "run the generated stream through a pipeline, log predictions")
    r.add_argument("model", help="checkpoint written by train")
    r.add_argument("--data", help="directory written by gen")
    r.add_argument("--out", help="prediction log path (required)")
    r.add_argument("--rate", type=float,
                   help="pace at RATE x real time (default: as fast as possible)")

    q = add("ask", "answer a question against the generated corpus")
    q.add_argument("query", help="the question")
    q.add_argument("--data", help="directory written by gen")
    q.add_argument("--facility", help="facility name for the log line")
    return p


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise CliError(f"cannot read config file: {e}")
    except json.JSONDecodeError as e:
        raise CliError(f"config file is not valid JSON: {e}")
    if not isinstance(doc, dict):
        raise CliError("config file must hold a JSON object")
    unknown = sorted(set(doc) - set(_FLAG_KEYS) - {"log_level"})
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def _effective(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge: explicit flags > config file > per-subcommand defaults."""
    cfg_path = args.config or os.environ.get(CONFIG_ENV)
    file_cfg = _load_config_file(cfg_path)
    level = str(file_cfg.get("log_level", "INFO")).upper()
    if level not in logging._nameToLevel:
        raise CliError(f"unknown log_level {level!r}")
    logging.basicConfig(stream=sys.stderr, format="%(name)s %(levelname)s %(message)s")
    log.setLevel(level)
    out = dict(defaults)
    for key in defaults:
        if key in file_cfg:
            out[key] = file_cfg[key]
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
    return out


_PATH_KEYS = frozenset({"out", "config", "data", "model"})


def _config_hash(options: dict) -> str:
    """Hash of the options that shape artifact content. File locations are
    excluded so the same run written to two directories hashes the same."""
    semantic = {k: v for k, v in options.items() if k not in _PATH_KEYS}
    blob = json.dumps(semantic, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _log_run(subcommand: str, options: dict) -> None:
    log.info("run subcommand=%s seed=%s config_hash=%s",
             subcommand, options.get("seed", "-"), _config_hash(options))


def _require(options: dict, *keys) -> None:
    for key in keys:
        if options.get(key) is None:
            raise CliError(f"--{key} is required")


def _data_dir(options: dict) -> Path:
    _require(options, "data")
    d = Path(options["data"])
    if not (d / MANIFEST_NAME).is_file():
        raise CliError(f"{d} does not contain {MANIFEST_NAME}; run gen first")
    return d


def _read_manifest(data: Path) -> dict:
    return json.loads((data / MANIFEST_NAME).read_text())


def _load_assembly(data: Path):
    from .predictx import load_dataset

    manifest = _read_manifest(data)
    samples, names = load_dataset(data / "assembly_timeseries.csv",
                                  data / "assembly_features.csv",
                                  manifest["window_len"])
    if list(names) != list(manifest["channel_names"]):
        raise CliError(f"channel names in {data} disagree with its manifest")
    return samples, manifest


def _load_ontology_for(options: dict, data: Path):
    from .ontology import load_ontology

    path = options.get("ontology") or data / "ontology.json"
    if not Path(path).is_file():
        raise CliError(f"ontology file {path} not found")
    return load_ontology(Path(path).read_text())


def _build_corpus_index(data: Path):
    from .infoguide import InfoConfig, build_index, ingest_manual, load_keywords

    manuals = sorted((data / "corpus" / "manuals").glob("*.txt"))
    if not manuals:
        raise CliError(f"no manuals under {data / 'corpus' / 'manuals'}")
    keywords = load_keywords()
    chunks = []
    for path in manuals:
        chunks.extend(ingest_manual(path.read_text(), keywords, source_doc=path.stem))
    return build_index(chunks, keywords, cfg=InfoConfig()), keywords


# ----------------------------------------------------------- subcommands


def _cmd_gen(options: dict) -> int:
    from .datagen import (
        CorpusGenConfig,
        ForecastGenConfig,
        GenConfig,
        gen_assembly,
        gen_corpus,
        gen_forecast,
        gen_replay,
        save_corpus,
    )
    from .foresight import save_forecast_dataset
    from .ontology import save_ontology
    from .predictx import save_dataset
    from .runtime import write_replay

    _require(options, "out")
    seed = int(options["seed"])
    out = Path(options["out"])
    out.mkdir(parents=True, exist_ok=True)

    cfg = GenConfig(seed=seed)
    ds = gen_assembly(cfg)
    save_ontology(ds.ontology, out / "ontology.json")
    save_dataset(ds.samples, out / "assembly_timeseries.csv",
                 out / "assembly_features.csv", ds.channel_names)
    updates, replay_meta = gen_replay(cfg)
    write_replay(out / "replay.log", updates)
    bundle = gen_forecast(ForecastGenConfig(seed=seed))
    save_forecast_dataset(out / "forecast.csv", bundle.products)
    save_corpus(gen_corpus(CorpusGenConfig(seed=seed)), out / "corpus")

    manifest = {
        "seed": seed,
        "config_hash": _config_hash(options),
        "facility_id": ds.ontology.facility_id,
        "channel_names": list(ds.channel_names),
        "window_len": cfg.window_len,
        "n_windows": cfg.n_windows,
        "image_feature_dim": cfg.image_feature_dim,
        "replay": {
            "anomaly_class": replay_meta.anomaly_class,
            "burst_start": replay_meta.burst_start,
            "burst_end": replay_meta.burst_end,
            "responsible_channels": list(replay_meta.responsible_channels),
        },
        "files": ["ontology.json", "assembly_timeseries.csv", "assembly_features.csv",
                  "replay.log", "forecast.csv", "corpus/"],
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("gen wrote %s (%d samples)", out, len(ds.samples))
    return 0


def _split_series(series, feats, lookback: int):
    from .foresight import ForecastSeries, StructuredFeatures

    n_train = int(len(series) * TRAIN_FRACTION)
    if n_train <= lookback:
        raise CliError(f"series {series.product_id} too short for lookback {lookback}")
    train_s = ForecastSeries(series.product_id, series.values[:n_train],
                             series.period_ms, series.timestamps[:n_train])
    # The test slice keeps lookback context so its first point is predictable.
    test_s = ForecastSeries(series.product_id, series.values[n_train - lookback:],
                            series.period_ms, series.timestamps[n_train - lookback:])
    train_f = StructuredFeatures(feats.names, feats.matrix[:n_train])
    test_f = StructuredFeatures(feats.names, feats.matrix[n_train - lookback:])
    return train_s, train_f, test_s, test_f


def _cmd_train(options: dict) -> int:
    _require(options, "agent")
    data = _data_dir(options)
    seed = int(options["seed"])

    if options["agent"] == "predictx":
        from .predictx import (
            FusionConfig,
            FusionVariant,
            save_fusion,
            split_dataset,
            train_fusion,
        )

        try:
            variant = FusionVariant(options["variant"])
        except ValueError:
            raise CliError(f"unknown variant {options['variant']!r}")
        samples, manifest = _load_assembly(data)
        onto = _load_ontology_for(options, data)
        train_set, _ = split_dataset(samples)
        cfg = FusionConfig(seed=seed, variables=tuple(manifest["channel_names"]))
        model = train_fusion(variant, train_set, onto, cfg)
        out = Path(options["out"] or f"fusion_{variant.value.lower()}.npz")
        save_fusion(model, out)
        log.info("trained %s on %d samples -> %s", variant.value, len(train_set), out)
        return 0

    from .foresight import (
        DEFAULT_LOOKBACK,
        evaluate,
        format_forecast_report,
        load_forecast_dataset,
        train_forecaster,
    )

    products = load_forecast_dataset(data / "forecast.csv")
    cfg = TrainConfig(**FORESIGHT_TRAIN)
    report_rows = {}
    for pid in sorted(products):
        series, feats = products[pid]
        tr_s, tr_f, te_s, te_f = _split_series(series, feats, DEFAULT_LOOKBACK)
        base = train_forecaster(tr_s, None, kil=False, config=cfg,
                                lookback=DEFAULT_LOOKBACK, seed=seed)
        kil = train_forecaster(tr_s, tr_f, kil=True, config=cfg,
                               lookback=DEFAULT_LOOKBACK, seed=seed)
        report_rows[pid] = (evaluate(base, te_s, None), evaluate(kil, te_s, te_f))
    out = Path(options["out"] or data / "forecasts.json")
    doc = {pid: {"base": _forecast_result_doc(b), "kil": _forecast_result_doc(k)}
           for pid, (b, k) in report_rows.items()}
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    log.info("forecast results -> %s", out)
    sys.stdout.write(format_forecast_report(report_rows))
    return 0


def _forecast_result_doc(r) -> dict:
    return {"product_id": r.product_id, "forecasts": [float(v) for v in r.forecasts],
            "actuals": [float(v) for v in r.actuals],
            "mae": float(r.mae), "rmse": float(r.rmse)}


def _load_forecast_results(data: Path):
    """Read the artifact written by train --agent foresight, if present."""
    from .foresight import ForecastResult

    path = data / "forecasts.json"
    results, baselines = {}, {}
    if not path.is_file():
        return results, baselines
    import numpy as np

    for pid, arms in json.loads(path.read_text()).items():
        for arm, sink in (("kil", results), ("base", baselines)):
            d = arms[arm]
            sink[pid] = ForecastResult(
                product_id=d["product_id"],
                forecasts=np.asarray(d["forecasts"], dtype=float),
                actuals=np.asarray(d["actuals"], dtype=float),
                mae=float(d["mae"]), rmse=float(d["rmse"]))
    return results, baselines


def _cmd_ablate(options: dict) -> int:
    from .predictx import FusionConfig
    from .predictx.ablation import run_ablation

    data = _data_dir(options)
    samples, manifest = _load_assembly(data)
    onto = _load_ontology_for(options, data)
    cfg = FusionConfig(seed=int(options["seed"]),
                       variables=tuple(manifest["channel_names"]))
    report = run_ablation(samples, onto, cfg)
    stem = Path(options["out"] or "ablation_report")
    if stem.suffix == ".json":
        stem = stem.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".json").write_text(report.to_json() + "\n")
    stem.with_suffix(".txt").write_text(report.to_text())
    log.info("ablation report -> %s{.json,.txt}", stem)
    sys.stdout.write(report.to_text())
    return 0


def _cmd_eval(options: dict) -> int:
    import numpy as np

    from .predictx import (
        FusionVariant,
        compute_detection_metrics,
        compute_weighted_metrics,
        load_fusion,
        predict_batch,
        split_dataset,
    )

    data = _data_dir(options)
    model_path = Path(options["model"])
    if not model_path.is_file():
        raise CliError(f"model file {model_path} not found")
    model = load_fusion(model_path)
    log.info("eval model variant=%s trained with seed=%d",
             model.variant.value, model.config.seed)
    samples, _ = _load_assembly(data)
    _, test_set = split_dataset(samples)
    frames = np.stack([s.window.frames for s in test_set])
    img = None
    if model.img is not None:
        img = np.stack([s.image.vector for s in test_set])
    _, _, predicted = predict_batch(model, frames, img)
    labels = [s.window.label for s in test_set]
    scorer = (compute_detection_metrics if model.variant is FusionVariant.B2
              else compute_weighted_metrics)
    m = scorer(predicted, labels)
    doc = json.dumps({
        "variant": model.variant.value,
        "n_test": len(test_set),
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "accuracy": m.accuracy,
        "per_class": {c.name: list(v) for c, v in m.per_class.items()},
    }, indent=2, sort_keys=True)
    if options["out"]:
        Path(options["out"]).write_text(doc + "\n")
        log.info("eval metrics -> %s", options["out"])
    else:
        sys.stdout.write(doc + "\n")
    return 0


def _cmd_serve(options: dict) -> int:
    from .predictx import load_fusion
    from .runtime import ServeConfig, serve

    data = _data_dir(options)
    model_path = Path(options["model"])
    if not model_path.is_file():
        raise CliError(f"model file {model_path} not found")
    model = load_fusion(model_path)
    onto = _load_ontology_for(options, data)
    manifest = _read_manifest(data)
    index, keywords = _build_corpus_index(data)
    forecasts, baselines = _load_forecast_results(data)
    cfg = ServeConfig(
        model=model,
        ontology=onto,
        channel_names=tuple(manifest["channel_names"]),
        index=index,
        keywords=keywords,
        forecast_results=forecasts,
        forecast_baselines=baselines,
        facility_name=options["facility"] or manifest["facility_id"],
    )
    rate = options.get("rate")
    replay_path = (data / "replay.log") if rate is not None else None
    if replay_path is not None and not replay_path.is_file():
        raise CliError(f"{replay_path} not found")
    log.info("serving on port %d%s", int(options["port"]),
             f", replaying at {rate}x" if rate else "")
    serve(cfg, port=int(options["port"]), replay_path=replay_path, rate=rate)
    return 0


def _cmd_replay(options: dict) -> int:
    from .predictx import load_fusion
    from .runtime import (
        FrameConsumer,
        MessageBus,
        PredictionPipeline,
        read_replay,
        replay,
        replay_offline,
    )

    data = _data_dir(options)
    _require(options, "out")
    model_path = Path(options["model"])
    if not model_path.is_file():
        raise CliError(f"model file {model_path} not found")
    model = load_fusion(model_path)
    onto = _load_ontology_for(options, data)
    manifest = _read_manifest(data)
    names = tuple(manifest["channel_names"])
    frames, _ = read_replay(data / "replay.log")

    rate = options.get("rate")
    if rate is None:
        stats = replay_offline(model, onto, names, frames, log_path=options["out"])
        fps = stats.frames / stats.wall_s if stats.wall_s > 0 else float("inf")
        log.info("replayed %d frames, %d predictions, %.0f frames/s",
                 stats.frames, stats.predictions, fps)
        return 0

    bus = MessageBus()
    pipeline = PredictionPipeline(model, onto, names, log_path=options["out"])
    consumer = FrameConsumer(bus, pipeline).start()
    t0 = time.perf_counter()
    replay(frames, bus, rate=rate)
    time.sleep(0.2)  # drain the consumer queue
    consumer.stop()
    pipeline.close()
    wall = time.perf_counter() - t0
    log.info("replayed %d frames at %sx, %d predictions, %.1fs",
             len(frames), rate, pipeline.predictions, wall)
    return 0


def _cmd_ask(options: dict) -> int:
    from .infoguide import InfoConfig, answer

    data = _data_dir(options)
    index, keywords = _build_corpus_index(data)
    a = answer(options["query"], index, cfg=InfoConfig(), keywords=keywords)
    if a.status == "refused":
        sys.stdout.write("No grounded answer found for this question; "
                         "try rephrasing with process terms.\n")
    else:
        sys.stdout.write(a.text + "\n")
        for ctx in a.contexts:
            sys.stdout.write(f"  [source: {ctx.chunk_id}]\n")
    return 0


_DEFAULTS = {
    "gen": {"seed": 42, "out": None},
    "train": {"agent": None, "variant": "P3", "data": None, "seed": 0, "out": None},
    "ablate": {"data": None, "seed": 0, "out": None},
    "eval": {"data": None, "out": None},
    "serve": {"data": None, "ontology": None, "port": 8077, "facility": None, "rate": None},
    "replay": {"data": None, "out": None, "rate": None},
    "ask": {"data": None, "facility": None},
}

_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "ablate": _cmd_ablate,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
    "replay": _cmd_replay,
    "ask": _cmd_ask,
}


def run(argv) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_help(sys.stderr)
        raise CliError("a subcommand is required")
    options = _effective(args, _DEFAULTS[args.subcommand])
    for positional in ("model", "query"):
        if hasattr(args, positional):
            options[positional] = getattr(args, positional)
    _log_run(args.subcommand, options)
    return _COMMANDS[args.subcommand](options)


def main(argv=None) -> int:
    try:
        return run(sys.argv[1:] if argv is None else list(argv))
    except CliError as e:
        sys.stderr.write(f"error: validation: {e}\n")
        return 1
    except (InputError, ValueError) as e:
        sys.stderr.write(f"error: validation: {e}\n")
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as e:  # noqa: BLE001  (contract: runtime errors exit 2)
        sys.stderr.write(f"error: runtime: {type(e).__name__}: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
