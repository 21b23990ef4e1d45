import json
from pathlib import Path

import numpy as np
import pytest

from bmlab.errors import ConfigError, ModelError, ReportParseError
from bmlab.labcli import COLUMNS, ExperimentConfig, evaluate_verdicts, run, verify
from process_directory import process_directory

CONFIGS_DIR = Path(__file__).parent.parent / "configs"


def _config(**kwargs) -> ExperimentConfig:
    d = {
        "function": "hermite:1",
        "model": "kronecker",
        "n_grid": [16, 64],
        "M": 1000,
        "seed": 17,
        "checks": ["variance", "tv", "stein", "gamma", "rate"],
    }
    d.update(kwargs)
    return ExperimentConfig.from_mapping(d)


@pytest.fixture(scope="module")
def report_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("h1-kronecker")
    report = run(_config(out=str(out)))
    return out, report


@pytest.mark.parametrize(
    "changes",
    [
        {"checks": ["variance", "kurtosis"]},
        {"n_grid": [64, 16]},
        {"n_grid": []},
        {"M": 1},
        {"M": 400},
        {"workers": 0},
        {"truncation_p": 0},
        {"function": "exp"},
        {"model": "brownian"},
        {"model": "table:0.5"},
        {"color": "blue"},
    ],
)
def test_invalid_configs(changes):
    with pytest.raises(ConfigError):
        _config(**changes)


def test_missing_config_keys():
    with pytest.raises(ConfigError, match="M"):
        ExperimentConfig.from_mapping({"function": "hermite:1", "model": "kronecker", "n_grid": [8]})


@pytest.mark.parametrize("path", sorted(CONFIGS_DIR.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    config = ExperimentConfig.load(path)
    assert config.n_grid == sorted(config.n_grid)


def test_load_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"function": "hermite:2", "model": "geom:0.5", "n_grid": [8], "M": 4}))
    config = ExperimentConfig.load(path, seed=9, out=None)
    assert config.seed == 9
    assert config.out is None


def test_unparseable_config(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text("function = ")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


def test_run_passes(report_dir):
    out, report = report_dir
    verdicts = {v.check: v for v in report.verdicts}
    assert verdicts["variance"].status == "pass"
    assert verdicts["gamma"].status == "pass"
    assert verdicts["rate"].status == "pass"
    assert "cells" not in verdicts
    assert [row["n"] for row in report.rows] == [16, 64]
    for row in report.rows:
        assert row["status"] == "ok"
        assert row["sigma2"] == pytest.approx(1.0)
        assert np.isfinite(row["tv"])
        assert row["tv_floor"] > 0.0
        assert row["gamma_ff_min"] == pytest.approx(1.0)


def test_report_files(report_dir):
    out, report = report_dir
    for name in ("report.csv", "report.json", "report.ttl"):
        assert (out / name).is_file()
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0].startswith("# bmlab ")
    assert lines[1].split(",") == list(COLUMNS)
    assert len(lines) == 2 + len(report.rows)
    assert not list(out.glob("*.tmp"))
    stored = json.loads((out / "report.json").read_text())
    assert stored["passed"] == report.passed
    assert stored["provenance"]["seed"] == 17


def test_report_independent_of_workers(tmp_path, report_dir):
    out, _ = report_dir
    run(_config(out=str(tmp_path), workers=4))
    one = (out / "report.csv").read_text().splitlines()
    four = (tmp_path / "report.csv").read_text().splitlines()
    assert one[1:] == four[1:]


def test_verify_agrees_with_run(report_dir):
    out, report = report_dir
    verdicts = verify(out)
    assert [(v.check, v.status) for v in verdicts] == [(v.check, v.status) for v in report.verdicts]


def test_verify_validates_the_rdf_rows(report_dir):
    out, _ = report_dir
    verdicts = verify(out / "report.json", validate=True)
    assert verdicts[-1].check == "shapes"
    assert verdicts[-1].status == "pass"


def test_verify_catches_an_edited_row(tmp_path, report_dir):
    out, _ = report_dir
    data = json.loads((out / "report.json").read_text())
    data["rows"][-1]["tv"] = 0.9
    edited = tmp_path / "report.json"
    edited.write_text(json.dumps(data))
    tv = next(v for v in verify(edited) if v.check == "tv")
    assert tv.failed
    assert tv.n == 64


def test_verify_a_truncated_report(tmp_path, report_dir):
    out, _ = report_dir
    text = (out / "report.json").read_text()
    truncated = tmp_path / "report.json"
    truncated.write_text(text[: len(text) // 2])
    with pytest.raises(ReportParseError):
        verify(truncated)


def test_verify_a_missing_report(tmp_path):
    with pytest.raises(ReportParseError):
        verify(tmp_path / "nothing.json")


def test_degenerate_limit_skips_clt_checks():
    # sum_k rho(k) = 0 so S_n -> 0
    report = run(
        _config(model="table:[1.0, -0.5]", M=600, checks=["variance", "tv", "stein"])
    )
    verdicts = {v.check: v for v in report.verdicts}
    assert verdicts["tv"].status == "skipped"
    assert verdicts["stein"].status == "skipped"
    assert verdicts["variance"].status == "pass"
    assert report.rows[0]["sigma2"] == 0.0
    assert report.rows[0]["tv"] is None


def test_failed_cell_is_recorded():
    # a table prefix only covers lags 0 and 1
    report = run(
        _config(model="table-prefix:[1.0, 0.3]", n_grid=[2, 8], M=20, checks=["variance"])
    )
    assert report.rows[0]["status"] == "ok"
    assert report.rows[1]["status"].startswith("error:variance:")
    assert any(v.check == "cells" and v.failed and v.n == 8 for v in report.verdicts)


def test_verdicts_from_rows_alone():
    config = _config(checks=["truncation"])
    rows = [
        {"n": 16, "status": "ok", "truncation_gap": 1.0, "truncation_gap_se": 0.1, "truncation_psi": 1.0,
         "truncation_bound": 1.2},
        {"n": 64, "status": "ok", "truncation_gap": 2.0, "truncation_gap_se": 0.1, "truncation_psi": 1.0,
         "truncation_bound": 1.2},
    ]
    [verdict] = evaluate_verdicts(rows, config)
    assert verdict.failed
    assert verdict.n == 64
    rows[1]["truncation_gap"] = 1.1
    [verdict] = evaluate_verdicts(rows, config)
    assert verdict.status == "pass"


def _gamma_rows(variances, nu_hat=10.0 / 3.0, sigma2=10.0 / 3.0):
    return [
        {"n": 256 * 4**i, "status": "ok", "gamma_ff_min": 0.5, "lambda_hat": 2.0, "mu_hat": 1.0,
         "bilinearity_residual": 0.0, "gamma_fg_var": v, "gamma_fg_var_se": 0.01,
         "nu_hat": nu_hat, "nu_se": 0.01, "sigma2": sigma2}
        for i, v in enumerate(variances)
    ]


@pytest.mark.parametrize(
    "variances, nu_hat, status",
    [
        ([1.0, 0.25, 0.06], 10.0 / 3.0, "pass"),
        ([1.0, 1.0, 1.0], 10.0 / 3.0, "fail"),
        ([1.0, 0.99, 0.5], 10.0 / 3.0, "fail"),
        ([1.0, 0.25, 0.06], 3.0, "fail"),
    ],
)
def test_gamma_verdict_from_rows(variances, nu_hat, status):
    config = _config(function="hermite:2", model="geom:0.5", checks=["gamma"])
    [verdict] = evaluate_verdicts(_gamma_rows(variances, nu_hat), config)
    assert verdict.status == status


def test_gamma_verdict_skips_nu_for_mixed_chaos():
    config = _config(function="coeffs:[0, 1, 0, 1]", model="geom:0.5", checks=["gamma"])
    [verdict] = evaluate_verdicts(_gamma_rows([1.0, 0.25, 0.06], nu_hat=3.0), config)
    assert verdict.status == "pass"


def test_gamma_verdict_accepts_a_constant_gamma():
    config = _config(checks=["gamma"])
    [verdict] = evaluate_verdicts(_gamma_rows([1e-32, 0.0], nu_hat=1.0, sigma2=1.0), config)
    assert verdict.status == "pass"


@pytest.mark.parametrize(
    "tv, kolmogorov, pvalue, status",
    [
        ([0.20, 0.08, 0.03], [0.10, 0.04, 0.01], [1e-9, 1e-3, 0.8], "pass"),
        ([0.20, 0.25, 0.03], [0.10, 0.04, 0.01], [1e-9, 1e-3, 0.8], "fail"),
        ([0.20, 0.08, 0.03], [0.10, 0.12, 0.01], [1e-9, 1e-6, 0.8], "fail"),
        # both rows at the noise level of the estimators
        ([0.20, 0.03, 0.035], [0.10, 0.01, 0.012], [1e-9, 0.8, 0.7], "pass"),
    ],
)
def test_tv_verdict_from_rows(tv, kolmogorov, pvalue, status):
    rows = [
        {"n": 256 * 4**i, "status": "ok", "tv": t, "tv_floor": 0.025, "kolmogorov": k,
         "kolmogorov_pvalue": p, "sigma2": 10.0 / 3.0}
        for i, (t, k, p) in enumerate(zip(tv, kolmogorov, pvalue))
    ]
    [verdict] = evaluate_verdicts(rows, _config(checks=["tv"]))
    assert verdict.status == status


def test_invalid_model_parameter():
    with pytest.raises(ModelError):
        _config(model="geom:2.0")


def test_linear_variance_run():
    report = run(_config(n_grid=[256], checks=["variance"]))
    [row] = report.rows
    assert abs(row["var_hat"] - 1.0) < 4.0 * np.sqrt(2.0 / 1000)
    assert report.passed


def test_process_directory(tmp_path):
    configs = tmp_path / "configs"
    configs.mkdir()
    (configs / "small.toml").write_text(
        'function = "hermite:1"\nmodel = "kronecker"\nn_grid = [8, 16]\nM = 50\nchecks = ["rate"]\n'
    )
    (configs / "broken.json").write_text('{"function": "hermite:1"}')
    (configs / "notes.txt").write_text("not a config")
    results = process_directory(configs, tmp_path / "out")
    assert results == {"broken": None, "small": True}
    assert (tmp_path / "out" / "small" / "report.csv").is_file()
