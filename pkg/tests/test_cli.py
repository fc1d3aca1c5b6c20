import json

import pytest

from shapguard import cli
from shapguard import explainer as ex

TINY = {
    "experiment": {"epochs": 1, "hidden_size": 4, "window": 6, "batch_size": 16, "reg_subsample": 2,
                   "n_members": 12, "n_nonmembers": 12, "n_references": 6, "regimes": ["baseline", "shap_reg"]},
    "days": 12,
    "appliances": 3,
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY))
    return path


def run(out, config, *argv):
    return cli.main([argv[0], "--out", str(out), "--config", str(config), *argv[1:]])


@pytest.fixture
def ingested(tmp_path, config):
    out = tmp_path / "exp"
    assert run(out, config, "synth", "--seed", "4") == 0
    assert run(out, config, "ingest", "--input", str(out / "raw" / "house1.csv")) == 0
    return out


def test_missing_input_is_a_data_error(tmp_path, config, capsys):
    missing = tmp_path / "nope.csv"
    assert run(tmp_path / "exp", config, "ingest", "--input", str(missing)) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and str(missing) in err["message"]


def test_bad_settings_are_config_errors(tmp_path, config, monkeypatch, capsys):
    out = tmp_path / "exp"
    assert run(out, config, "train", "--regime", "adam") == 1
    monkeypatch.setenv("SHAPGUARD_SEED", "abc")
    assert run(out, config, "train") == 1
    monkeypatch.delenv("SHAPGUARD_SEED")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": {"epoch": 3}}))
    assert run(out, bad, "train") == 1
    assert "epoch" in capsys.readouterr().err


def test_settings_precedence(tmp_path, config, monkeypatch):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"seed": 3, "house": "cfg_house"}))
    args = cli.build_parser().parse_args(["train", "--out", "o", "--config", str(cfg)])
    assert cli.settings_from(args).seed == 3
    monkeypatch.setenv("SHAPGUARD_SEED", "5")
    monkeypatch.setenv("SHAPGUARD_HOUSE", "env_house")
    st = cli.settings_from(args)
    assert (st.seed, st.house) == (5, "env_house")
    args = cli.build_parser().parse_args(["train", "--out", "o", "--config", str(cfg), "--seed", "9"])
    assert cli.settings_from(args).seed == 9
    args = cli.build_parser().parse_args(["train", "--out", "o", "--lambda", "0.25"])
    assert cli.settings_from(args).experiment.lam == 0.25


def test_report_on_incomplete_manifest(ingested, config, capsys):
    capsys.readouterr()
    assert run(ingested, config, "report") == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ManifestIncomplete"
    assert "house1/models/baseline" in err["missing"]


def test_train_is_deterministic(ingested, config):
    assert run(ingested, config, "train", "--seed", "2") == 0
    ckpt = ingested / "models" / "house1" / "baseline.ckpt"
    first = ckpt.read_bytes()
    assert run(ingested, config, "train", "--seed", "2") == 0
    assert ckpt.read_bytes() == first


def test_tampered_artifact_is_detected(ingested, config, capsys):
    assert run(ingested, config, "train") == 0
    ckpt = ingested / "models" / "house1" / "baseline.ckpt"
    ckpt.write_bytes(ckpt.read_bytes() + b"\n")
    capsys.readouterr()
    assert run(ingested, config, "explain") == 2
    assert "baseline.ckpt (hash mismatch)" in capsys.readouterr().err


def test_nine_appliances_give_nine_attributions(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**TINY, "appliances": 9}))
    out = tmp_path / "exp"
    assert run(out, cfg, "synth") == 0
    assert run(out, cfg, "ingest", "--input", str(out / "raw" / "house1.csv")) == 0
    assert run(out, cfg, "train") == 0
    assert run(out, cfg, "explain") == 0
    am = ex.load_attributions(out / "attributions" / "house1" / "baseline_test.csv")
    assert am.phi.shape[1] == 9
    header = (out / "attributions" / "house1" / "baseline_test.csv").read_text().splitlines()[0]
    assert header.count("phi_") == 9


def test_full_pipeline_manifest_and_log(ingested, config):
    assert run(ingested, config, "run", "--input", str(ingested / "raw" / "house1.csv")) == 0
    manifest = json.loads((ingested / "manifest.json").read_text())
    assert {r["path"] for r in manifest["report"]} >= {"report/comparison_table.csv", "report/heatmap.csv"}
    events = [json.loads(line) for line in (ingested / "run_log.jsonl").read_text().splitlines()]
    assert events[-1]["event"] == "end" and events[-1]["status"] == "ok"
    assert any(e["event"] == "artifact" and len(e["sha256"]) == 64 for e in events)
    rows = (ingested / "report" / "comparison_table.csv").read_text().splitlines()
    assert len(rows) == 3


def test_lock_contention_is_a_config_error(ingested, config, monkeypatch, capsys):
    exp = cli.Experiment(ingested)
    monkeypatch.setattr(cli.Experiment, "lock", lambda self, timeout=0.1: cli.FileLock(
        str(self.root / ".manifest.lock"), timeout=timeout))
    with exp.lock():
        assert run(ingested, config, "train") == 1
    assert "Timeout" in capsys.readouterr().err
