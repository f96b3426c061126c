import argparse
import json
import os

import pytest

from dsiscan import dataio
from dsiscan.commands import build_config
from dsiscan.errors import InputValidationError
from dsiscan.schemas import PipelineConfig
from main import main


def _read_json(path):
    with open(path) as f:
        return json.load(f)


def test_synth_writes_sizes_and_ground_truth(tmp_path):
    out = str(tmp_path / "synth")
    assert main(["synth", "--out", out, "--count", "50", "--seed", "3"]) == 0
    sample = dataio.load_sizes(os.path.join(out, "sizes.csv"))
    assert sample.count == 50
    assert sample.sizes.min() >= 1e5 and sample.sizes.max() <= 1e11
    truth = _read_json(os.path.join(out, "ground_truth.json"))
    assert truth["predicted_omega"] == pytest.approx(4.52, abs=0.01)
    assert truth["log_periodic"] is True


def test_synth_without_oscillation(tmp_path):
    out = str(tmp_path / "synth")
    assert main(["synth", "--out", out, "--w1", "0"]) == 0
    truth = _read_json(os.path.join(out, "ground_truth.json"))
    assert truth["note"] == "no log-periodicity"
    assert truth["count"] == 479


def test_synth_from_target_omega(tmp_path):
    out = str(tmp_path / "synth")
    assert main(["synth", "--out", out, "--omega", "4.6", "--exponent", "2"]) == 0
    truth = _read_json(os.path.join(out, "ground_truth.json"))
    assert truth["predicted_omega"] == pytest.approx(4.6)
    assert truth["tail_exponent"] == pytest.approx(2.0)


def test_synth_invalid_params_exit_2(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--gamma", "0.6"]) == 2
    assert "invalid parameters" in capsys.readouterr().err


def test_analyze_missing_sizes_exit_2(tmp_path, capsys):
    assert main(["analyze", "--out", str(tmp_path / "report")]) == 2
    assert "[inputs]" in capsys.readouterr().err


def test_analyze_bad_header_exit_2(tmp_path, write_csv):
    sizes = write_csv("sizes.csv", "id,size\nA,1\n")
    assert main(["analyze", "--sizes", sizes, "--out", str(tmp_path / "report")]) == 2


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 1, "out": "from_file", "omega_max": 12.0}))
    args = argparse.Namespace(config=str(path), seed=5, out=None, omega_max=None, bandwidths=[0.1, 0.2])
    cfg = build_config(args, PipelineConfig)
    assert cfg.seed == 5
    assert cfg.out == "from_file"
    assert cfg.omega_max == 12.0
    assert cfg.bandwidth_candidates() == [0.1, 0.2]


def test_config_file_must_be_json_object(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("[1, 2]")
    with pytest.raises(InputValidationError):
        build_config(argparse.Namespace(config=str(path)), PipelineConfig)


def test_unknown_config_key_is_rejected(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"sead": 1}))
    assert main(["analyze", "--config", str(path)]) == 2


def test_selftest_subset_passes(capsys):
    assert main(["selftest", "--only", "2", "5"]) == 0
    out = capsys.readouterr().out
    assert "Lomb correctness" in out and "Analytic identities" in out


def test_selftest_failure_exit_4(monkeypatch):
    from dsiscan import acceptance

    monkeypatch.setattr(acceptance, "CRITERIA", [(2, "always fails", lambda seed: (False, "no"), 1.0)])
    assert main(["selftest"]) == 4


def test_zero_workers_exit_2(tmp_path, lognormal_sample):
    sizes = str(tmp_path / "sizes.csv")
    dataio.save_sizes(sizes, lognormal_sample)
    assert main(["analyze", "--sizes", sizes, "--n-jobs", "0", "--out", str(tmp_path / "report")]) == 2


def test_selftest_over_budget_exit_4(monkeypatch, capsys):
    from dsiscan import acceptance

    monkeypatch.setattr(acceptance, "CRITERIA", [(2, "too slow", lambda seed: (True, "ok"), -1.0)])
    assert main(["selftest"]) == 4
    assert "over the" in capsys.readouterr().out
