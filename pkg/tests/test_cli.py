"""Command-line contract tests: exit codes (0 ok, 1 validation, 2 runtime),
option precedence (flags > config file > defaults), byte-identical artifacts
from repeated runs, and the shape of each subcommand's output.
"""

import hashlib
import json
import logging
import subprocess
import sys
from pathlib import Path

import pytest

from smartpilot import cli

SEED = 42


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "data"
    assert run_cli("gen", "--seed", str(SEED), "--out", str(d)) == 0
    return d


@pytest.fixture(scope="session")
def model_path(tmp_path_factory, data_dir):
    p = tmp_path_factory.mktemp("cli_model") / "p3.npz"
    assert run_cli("train", "--agent", "predictx", "--variant", "P3",
                   "--data", str(data_dir), "--seed", "0", "--out", str(p)) == 0
    return p


def tree_digest(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


# ------------------------------------------------------------ exit codes


def test_no_subcommand_is_a_validation_error(capsys):
    assert run_cli() == 1


def test_unknown_flag_rejected():
    assert run_cli("gen", "--bogus", "x") == 1


def test_unknown_subcommand_rejected():
    assert run_cli("frobnicate") == 1


def test_missing_required_flag_rejected(tmp_path):
    assert run_cli("gen") == 1  # no --out
    assert run_cli("train", "--data", str(tmp_path)) == 1  # no --agent
    assert run_cli("ablate") == 1  # no --data


def test_non_integer_seed_rejected():
    assert run_cli("gen", "--seed", "notanint", "--out", "/tmp/x") == 1


def test_missing_data_dir_rejected(tmp_path):
    assert run_cli("ablate", "--data", str(tmp_path / "nope")) == 1


def test_dir_without_manifest_rejected(tmp_path):
    (tmp_path / "stray.txt").write_text("not a dataset")
    assert run_cli("ablate", "--data", str(tmp_path)) == 1


def test_malformed_model_file_is_a_validation_error(tmp_path, data_dir):
    bad = tmp_path / "bad.npz"
    bad.write_text("garbage")
    assert run_cli("eval", str(bad), "--data", str(data_dir)) == 1


def test_unexpected_exception_maps_to_exit_2(monkeypatch, capsys):
    def boom(options):
        raise RuntimeError("wires crossed")

    monkeypatch.setitem(cli._COMMANDS, "gen", boom)
    assert run_cli("gen", "--out", "/tmp/whatever") == 2
    assert "runtime" in capsys.readouterr().err


def test_help_exits_zero_and_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as e:
        run_cli("--help")
    assert e.value.code == 0
    out = capsys.readouterr().out
    for name in ("gen", "train", "ablate", "eval", "serve", "replay", "ask"):
        assert name in out


@pytest.mark.parametrize("sub,flags", [
    ("gen", ["--seed", "--out", "--config"]),
    ("train", ["--agent", "--variant", "--data", "--seed", "--out", "--config"]),
    ("ablate", ["--data", "--seed", "--out", "--config"]),
    ("eval", ["--data", "--out", "--config"]),
    ("serve", ["--ontology", "--port", "--facility", "--rate", "--config"]),
    ("replay", ["--data", "--out", "--rate", "--config"]),
    ("ask", ["--data", "--facility", "--config"]),
])
def test_subcommand_help_enumerates_every_flag(capsys, sub, flags):
    with pytest.raises(SystemExit) as e:
        run_cli(sub, "--help")
    assert e.value.code == 0
    out = capsys.readouterr().out
    for flag in flags:
        assert flag in out, f"{sub} --help is missing {flag}"


# ------------------------------------------------------- config precedence


def test_config_file_fills_in_missing_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 7, "out": str(tmp_path / "from_cfg")}))
    assert run_cli("gen", "--config", str(cfg)) == 0
    manifest = json.loads((tmp_path / "from_cfg" / "manifest.json").read_text())
    assert manifest["seed"] == 7


def test_explicit_flag_beats_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 7}))
    out = tmp_path / "d"
    assert run_cli("gen", "--config", str(cfg), "--seed", "3", "--out", str(out)) == 0
    assert json.loads((out / "manifest.json").read_text())["seed"] == 3


def test_env_var_names_the_default_config(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 11}))
    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    out = tmp_path / "d"
    assert run_cli("gen", "--out", str(out)) == 0
    assert json.loads((out / "manifest.json").read_text())["seed"] == 11


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 7, "bogus": 1}))
    assert run_cli("gen", "--config", str(cfg), "--out", str(tmp_path / "d")) == 1


def test_malformed_config_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert run_cli("gen", "--config", str(cfg), "--out", str(tmp_path / "d")) == 1
    cfg.write_text(json.dumps([1, 2]))
    assert run_cli("gen", "--config", str(cfg), "--out", str(tmp_path / "d")) == 1


def test_config_hash_ignores_output_location():
    a = cli._config_hash({"seed": 1, "out": "/a", "data": "/x"})
    b = cli._config_hash({"seed": 1, "out": "/b", "data": "/y"})
    c = cli._config_hash({"seed": 2, "out": "/a", "data": "/x"})
    assert a == b
    assert a != c


def test_every_run_logs_seed_and_config_hash(tmp_path, caplog):
    with caplog.at_level(logging.INFO, logger="smartpilot"):
        run_cli("gen", "--seed", "5", "--out", str(tmp_path / "d"))
    line = next(r.message for r in caplog.records if "config_hash=" in r.message)
    assert "seed=5" in line
    assert "subcommand=gen" in line


# ------------------------------------------------------------ determinism


def test_gen_twice_writes_byte_identical_trees(tmp_path, data_dir):
    other = tmp_path / "again"
    assert run_cli("gen", "--seed", str(SEED), "--out", str(other)) == 0
    assert tree_digest(other) == tree_digest(data_dir)


def test_gen_seed_changes_the_artifacts(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("gen", "--seed", "1", "--out", str(a)) == 0
    assert run_cli("gen", "--seed", "2", "--out", str(b)) == 0
    da, db = tree_digest(a), tree_digest(b)
    assert set(da) == set(db)
    assert da["assembly_timeseries.csv"] != db["assembly_timeseries.csv"]


def test_train_twice_writes_byte_identical_checkpoint(tmp_path, data_dir, model_path):
    again = tmp_path / "again.npz"
    assert run_cli("train", "--agent", "predictx", "--variant", "P3",
                   "--data", str(data_dir), "--seed", "0", "--out", str(again)) == 0
    assert again.read_bytes() == model_path.read_bytes()


# -------------------------------------------------------------- subcommands


def test_gen_writes_the_documented_layout(data_dir):
    for name in ("manifest.json", "ontology.json", "assembly_timeseries.csv",
                 "assembly_features.csv", "forecast.csv", "replay.log"):
        assert (data_dir / name).is_file(), name
    manuals = list((data_dir / "corpus" / "manuals").glob("*.txt"))
    assert len(manuals) >= 3
    assert (data_dir / "corpus" / "gold.json").is_file()
    assert (data_dir / "corpus" / "ood.json").is_file()
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["seed"] == SEED
    assert len(manifest["channel_names"]) == 12
    assert manifest["config_hash"]


def test_train_unknown_variant_rejected(data_dir):
    assert run_cli("train", "--agent", "predictx", "--variant", "P9",
                   "--data", str(data_dir)) == 1


def test_train_unknown_agent_rejected(data_dir):
    assert run_cli("train", "--agent", "oracle", "--data", str(data_dir)) == 1


def test_ablate_reports_five_variants_with_p3_over_p1(tmp_path, data_dir, capsys):
    stem = tmp_path / "report"
    assert run_cli("ablate", "--data", str(data_dir), "--seed", "7",
                   "--out", str(stem)) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert sorted(report["variants"]) == ["B1", "B2", "P1", "P2", "P3"]
    acc = {v: report["variants"][v]["accuracy"] for v in report["variants"]}
    assert acc["P3"] > acc["P1"]
    text = (tmp_path / "report.txt").read_text()
    for v in ("B1", "B2", "P1", "P2", "P3"):
        assert v in text
    assert "P3" in capsys.readouterr().out


def test_eval_writes_per_class_metrics(tmp_path, data_dir, model_path):
    out = tmp_path / "metrics.json"
    assert run_cli("eval", str(model_path), "--data", str(data_dir),
                   "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert doc["variant"] == "P3"
    assert doc["n_test"] == 400
    assert len(doc["per_class"]) == 7
    assert 0.0 <= doc["accuracy"] <= 1.0


def test_replay_offline_writes_one_line_per_prediction(tmp_path, data_dir, model_path):
    out = tmp_path / "pred.log"
    assert run_cli("replay", str(model_path), "--data", str(data_dir),
                   "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    # 1000 frames re-keyed into windows: the first window_len-1 frames only
    # warm the buffer, so predictions = frames - (window_len - 1).
    assert len(lines) == 971
    first = json.loads(lines[0])
    for key in ("id", "timestamp", "predicted_class", "class_probs", "next_frame"):
        assert key in first


def test_replay_requires_out(data_dir, model_path):
    assert run_cli("replay", str(model_path), "--data", str(data_dir)) == 1


def test_ask_gibberish_refuses_but_exits_zero(data_dir, capsys):
    assert run_cli("ask", "zq xv qqq", "--data", str(data_dir)) == 0
    out = capsys.readouterr().out
    assert "No grounded answer" in out


def test_ask_grounded_question_answers_with_sources(data_dir, capsys):
    assert run_cli("ask", "What safety checks apply to the conveyor belt?",
                   "--data", str(data_dir)) == 0
    out = capsys.readouterr().out
    assert "No grounded answer" not in out
    assert "[source:" in out


def test_console_script_is_installed():
    proc = subprocess.run([sys.executable, "-m", "smartpilot.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "smartpilot" in proc.stdout
