import json
import subprocess
import sys
from pathlib import Path

from rdflib import Graph

from bmlab.__main__ import main

PACKAGE_ROOT = Path(__file__).parent.parent


def _bmlab(*args) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "bmlab", *map(str, args)],
        cwd=PACKAGE_ROOT,
        capture_output=True,
        text=True,
    )


def test_cli_expand_to_stdout():
    proc = _bmlab("expand", "hermite:2")
    assert proc.returncode == 0
    assert json.loads(proc.stdout) == {
        "coeffs": [0.0, 0.0, 1.0],
        "rank": 2,
        "max_order": 2,
        "source": "symbolic-coefficients",
    }


def test_cli_expand_to_file(tmp_path):
    output_file = tmp_path / "abs.json"
    assert main(["expand", "abs-centered", "--max-order", "10", "--out", str(output_file)]) == 0
    d = json.loads(output_file.read_text())
    assert d["rank"] == 2
    assert d["max_order"] == 10


def test_cli_unknown_function():
    proc = _bmlab("expand", "exp")
    assert proc.returncode == 2
    assert "ConfigError" in proc.stderr


def test_cli_validate_model(capsys):
    assert main(["validate-model", "geom:0.5", "-n", "64"]) == 0
    assert json.loads(capsys.readouterr().out)["psd"] is True
    assert main(["validate-model", "table:[1.0, 0.9]", "-n", "3"]) == 1


def test_cli_invalid_model_is_a_numerical_error(capsys):
    assert main(["validate-model", "geom:1.5", "-n", "8"]) == 3
    assert "ModelError" in capsys.readouterr().err


def test_cli_output_to_a_missing_directory(tmp_path):
    assert main(["expand", "hermite:1", "--out", str(tmp_path / "missing" / "out.json")]) == 2


def test_cli_simulate(tmp_path):
    stem = tmp_path / "batch"
    assert main(["simulate", "geom:0.5", "-n", "16", "-M", "4", "--double", "--seed", "3", "--out", str(stem)]) == 0
    sidecar = json.loads(stem.with_suffix(".json").read_text())
    assert sidecar["seed"] == 3
    assert stem.with_suffix(".bin").stat().st_size == 2 * 16 * 4 * 8


def test_cli_variance(capsys):
    assert main(["variance", "hermite:2", "geom:0.5"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert abs(d["sigma2"] - 10.0 / 3.0) < 1e-9
    assert d["degenerate"] is False


def test_cli_sharp_check(capsys):
    code = main(["sharp-check", "hermite:1", "kronecker", "-n", "16", "-M", "200", "--hat-count", "16"])
    d = json.loads(capsys.readouterr().out)
    assert len(d["identity"]) == 16
    assert code == (0 if all(row["pass"] for row in d["identity"]) else 1)


def test_cli_run_and_verify(tmp_path):
    config = tmp_path / "config.toml"
    config.write_text(
        'function = "hermite:2"\n'
        'model = "geom:0.5"\n'
        "n_grid = [16, 128]\n"
        "M = 200\n"
        'checks = ["gamma", "rate"]\n'
    )
    out = tmp_path / "report"
    proc = _bmlab("run", "--config", config, "--out", out, "--seed", 5)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "gamma: pass" in proc.stdout
    assert Graph().parse(out / "report.ttl")

    proc = _bmlab("verify", out, "--validate")
    assert proc.returncode == 0, proc.stdout
    assert "shapes: pass" in proc.stdout


def test_cli_verify_a_broken_report(tmp_path):
    broken = tmp_path / "report.json"
    broken.write_text("{")
    assert main(["verify", str(broken)]) == 2


def test_cli_clt_check(capsys):
    code = main(["clt-check", "hermite:1", "kronecker", "-n", "64", "-M", "1000", "--seed", "3"])
    d = json.loads(capsys.readouterr().out)
    assert d["n"] == 64
    assert 0.0 < d["tv_floor"] < 0.1
    assert 0.0 <= d["kolmogorov"] <= 1.0
    assert len(d["stein"]) == 9
    assert code == (0 if d["pass"] else 1)


def test_cli_clt_check_with_too_few_draws(capsys):
    assert main(["clt-check", "hermite:1", "kronecker", "-n", "64", "-M", "100"]) == 3
    assert "EstimationError" in capsys.readouterr().err
