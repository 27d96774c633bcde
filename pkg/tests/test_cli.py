import json
import xml.etree.ElementTree as ET

import pytest

from skiprl.cli import main


@pytest.fixture()
def config_file(tmp_path):
    doc = {
        "env": {"d": 2, "horizon": 2, "stage_sizes": [1, 3, 1], "num_actions": 2, "seed": 3},
        "data": {"n": 80, "seed": 17},
        "learn": {"alpha": 0.3, "grid_per_stage": 6, "combo_cap": 32},
        "calibration": {"enabled": True, "replicates": 3, "delta": 0.34},
        "guesses": {"count": 3, "spread": 0.3, "seed": 2},
        "sweep": {"n_values": [40, 80], "replicates": 2},
        "policy_sample": 30,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_full_pipeline(tmp_path, config_file, capsys):
    env_path = str(tmp_path / "env.json")
    data_path = str(tmp_path / "data.jsonl")
    outcome_path = str(tmp_path / "outcome.json")

    assert main(["gen-env", "--config", config_file, "--out", env_path]) == 0
    assert json.load(open(env_path))["H"] == 2

    assert main(["collect", "--config", config_file, "--out", data_path]) == 0
    assert sum(1 for _ in open(data_path)) == 80

    assert main(["learn", "--config", config_file, "--data", data_path, "--out", outcome_path]) == 0
    doc = json.load(open(outcome_path))
    assert {"chosen_guess", "thetas", "per_guess", "policy"} <= set(doc)

    assert main(["eval", "--config", config_file, "--outcome", outcome_path]) == 0
    out = capsys.readouterr().out
    assert "gap" in out


def test_sweep_and_plot(tmp_path, config_file):
    out_dir = str(tmp_path / "results")
    assert main(["sweep", "--config", config_file, "--out-dir", out_dir]) == 0
    rows = open(out_dir + "/rows.csv").read().splitlines()
    assert len(rows) == 1 + 2 * 2
    ET.parse(out_dir + "/gap_vs_n.svg")

    replot = str(tmp_path / "replot")
    assert main(["plot", "--rows", out_dir + "/rows.csv", "--out-dir", replot]) == 0
    ET.parse(replot + "/gap_vs_n.svg")


def test_verify_subset_and_exit_codes(tmp_path, capsys):
    report_path = str(tmp_path / "report.json")
    assert main(["verify", "--lemma", "perf-diff", "--seed", "0", "--out", report_path]) == 0
    report = json.load(open(report_path))
    assert [s["name"] for s in report["suites"]] == ["perf-diff"]
    out = capsys.readouterr().out
    assert "worst slack" in out


def test_verify_all_passes(tmp_path):
    report_path = str(tmp_path / "report.json")
    assert main(["verify", "--all", "--out", report_path]) == 0
    report = json.load(open(report_path))
    assert report["all_pass"] and len(report["suites"]) == 7


def test_unknown_inputs_fail_cleanly(tmp_path):
    assert main(["eval", "--outcome", str(tmp_path / "missing.json")]) == 2
