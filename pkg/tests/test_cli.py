import json
import subprocess
import sys

import pytest

import workspace
from creditnet.cli import main


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    return root, workspace.build(root)


def run(argv, out):
    return main([*argv, "--out", str(out)])


@pytest.mark.parametrize("name", workspace.SUBCOMMANDS)
def test_subcommand_runs(ws, tmp_path, name):
    root, files = ws
    argv = workspace.commands(files, root)[name]
    assert run(argv, tmp_path) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == name and manifest["reports"]
    for report in manifest["reports"]:
        assert (tmp_path / report).exists()
    if name != "synth":
        assert manifest["inputs"]


def test_csv_format(ws, tmp_path):
    root, files = ws
    argv = workspace.commands(files, root)["resilience"]
    assert run([*argv, "--format", "csv"], tmp_path) == 0
    lines = (tmp_path / "resilience.csv").read_text().splitlines()
    assert lines[0] == "removals,lcc_size" and len(lines) == 6


def test_reports_content(ws, tmp_path):
    root, files = ws
    cmds = workspace.commands(files, root)
    assert run(cmds["settle"], tmp_path / "s") == 0
    settle = json.loads((tmp_path / "s" / "settle.json").read_text())
    assert settle["n_intents"] == 30 and settle["n_executed"] + len(settle["failures"]) == 30
    assert run(cmds["stale-offers"], tmp_path / "o") == 0
    stale = json.loads((tmp_path / "o" / "stale_offers.json").read_text())
    assert stale["realized_gain"] == "200.000000" and stale["at_risk_total"] == "2000.000000"
    points = (tmp_path / "o" / "rate_points.csv").read_text().splitlines()
    assert points[0] == "timestamp,tx_rate,reference_rate,side" and len(points) == 3


def test_g13_average_degree(fixtures_dir, tmp_path):
    argv = ["metrics", "--snapshot", str(fixtures_dir / "g13-shape.jsonl"), "--out", str(tmp_path)]
    assert main(argv) == 0
    rep = json.loads((tmp_path / "metrics.json").read_text())
    assert abs(rep["avg_degree"] - 3.68) <= 0.05


def test_domain_error_exit_one(ws, tmp_path, capsys):
    root, files = ws
    argv = ["stuck-credit", "--snapshot", str(files["snapshot"]), "--gateways", str(files["registry"]),
            "--gateway", "u000-0000", "--rates", str(files["rates"])]
    assert run(argv, tmp_path) == 1
    assert "NotAGateway" in capsys.readouterr().err


def test_missing_file_exit_one(tmp_path, capsys):
    assert run(["validate", "--snapshot", str(tmp_path / "absent.jsonl")], tmp_path) == 1


def test_usage_errors(ws, tmp_path, capsys):
    root, files = ws
    assert main(["metrics", "--snapshot", str(files["snapshot"]), "--bogus", "--other=1"]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err == ["creditnet: unrecognized argument: --bogus", "creditnet: unrecognized argument: --other=1"]
    assert main(["frobnicate"]) == 2
    assert main(["metrics"]) == 2
    assert run(["mixing", "--snapshot", str(files["snapshot"]), "--epsilon", "0.7"], tmp_path) == 2


def test_inputs_untouched(ws, tmp_path):
    root, files = ws
    before = files["snapshot"].read_bytes()
    assert run(workspace.commands(files, root)["settle"], tmp_path) == 0
    assert files["snapshot"].read_bytes() == before


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "creditnet", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("creditnet ")
