"""
Experiment definition, execution and reports.

An experiment simulates one path batch per n of its grid and runs the requested
checks on it. Each (n, check) cell is independent; a cell that raises records
its error and the rest of the grid still runs. The report rows are written as

  report.csv   plot-ready rows, first line a comment with version and timestamp
  report.json  config echo, provenance, rows, cells and verdicts
  report.ttl   the rows as an RDF Data Cube

each through a temporary file renamed into place.
"""
import csv
import io
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pyshacl import validate as val
from rdflib import BNode, Graph, Literal
from rdflib.namespace import XSD

from bmlab import __version__
from bmlab._LAB import LAB
from bmlab.clt import (
    calibrate_tv_floor,
    empirical_variance,
    limiting_variance,
    nnp21_rate,
    partial_sum,
    stein_discrepancy,
    tv_estimate,
)
from bmlab.errors import ConfigError, LabError, ReportParseError
from bmlab.gaussproc import PathBatch, parse_model_spec, simulate
from bmlab.hermite import chaos_energies
from bmlab.malliavin import (
    bilinearity_residual,
    chaos_tv_diagnostic,
    concentration,
    estimate_limits,
    gamma_estimate,
    key_identity_grid,
    truncation_gap,
)
from bmlab.parser import (
    EXTRA_PREFIXES,
    _bind_extra_prefixes,
    _create_observation,
    _create_observation_group,
    _load_config,
    _parse_function_spec,
)
from reference_data.reference import (
    default_hat_count,
    default_k_lag,
    default_max_order,
    default_st_grid,
    default_truncation_p,
    default_workers,
    default_xi_grid,
    known_checks,
    ks_pvalue_level,
    min_kde_sample,
    nu_rtol,
    pass_z,
    report_files,
    tv_floor_band,
    variance_rtol,
)

LOGGER = logging.getLogger(__name__)

REPORT_SHAPES = Path(__file__).parent.parent / "reference_data" / "report_shapes.ttl"

# report column -> RDF measure property, in CSV order
COLUMNS = {
    "n": LAB.n,
    "seed": LAB.seed,
    "code_version": LAB.codeVersion,
    "M": LAB.replications,
    "var_hat": LAB.varHat,
    "var_se": LAB.varSe,
    "sigma2": LAB.sigma2,
    "tv": LAB.tv,
    "tv_floor": LAB.tvFloor,
    "kolmogorov": LAB.kolmogorov,
    "kolmogorov_pvalue": LAB.kolmogorovPValue,
    "nnp21_rate": LAB.nnp21Rate,
    "stein_disc": LAB.steinDisc,
    "stein_se": LAB.steinSe,
    "stein_max_z": LAB.steinMaxZ,
    "lambda_hat": LAB.lambdaHat,
    "mu_hat": LAB.muHat,
    "nu_hat": LAB.nuHat,
    "nu_se": LAB.nuSe,
    "gamma_fg_var": LAB.gammaFgVar,
    "gamma_fg_var_se": LAB.gammaFgVarSe,
    "gamma_ff_min": LAB.gammaFfMin,
    "bilinearity_residual": LAB.bilinearityResidual,
    "chaos_tv_diagnostic": LAB.chaosTvDiagnostic,
    "identity_max_z": LAB.identityMaxZ,
    "identity_points": LAB.identityPoints,
    "identity_failures": LAB.identityFailures,
    "truncation_gap": LAB.truncationGap,
    "truncation_gap_se": LAB.truncationGapSe,
    "truncation_psi": LAB.truncationPsi,
    "truncation_bound": LAB.truncationBound,
    "status": LAB.status,
}

# checks that need the doubled copy X-hat
_SHARP_CHECKS = {"identity", "truncation"}
# checks meaningless when sigma^2 = 0
_CLT_CHECKS = {"tv", "stein"}

_FIELDS = {
    "function",
    "model",
    "n_grid",
    "M",
    "hat_count",
    "seed",
    "checks",
    "out",
    "workers",
    "k_lag",
    "max_order",
    "xi_grid",
    "st_grid",
    "truncation_p",
    "clip",
}


@dataclass
class ExperimentConfig:
    function: str
    model: str
    n_grid: List[int]
    M: int
    seed: int = 0
    hat_count: int = default_hat_count
    checks: List[str] = field(default_factory=lambda: ["variance"])
    out: Optional[str] = None
    workers: int = default_workers
    k_lag: int = default_k_lag
    max_order: int = default_max_order
    xi_grid: List[float] = field(default_factory=lambda: list(default_xi_grid))
    st_grid: List[Tuple[float, float]] = field(default_factory=lambda: list(default_st_grid))
    truncation_p: int = default_truncation_p
    clip: bool = False

    def __post_init__(self):
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ConfigError(f"n_grid must be a non-empty list of positive lengths, got {self.n_grid}")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError(f"n_grid must be strictly increasing, got {self.n_grid}")
        if self.M < 2:
            raise ConfigError(f"M must be at least 2, got {self.M}")
        if "tv" in self.checks and self.M < min_kde_sample:
            raise ConfigError(f"The tv check needs M >= {min_kde_sample} draws, got {self.M}")
        unknown = [c for c in self.checks if c not in known_checks]
        if unknown:
            raise ConfigError(
                f"Unknown check(s) {', '.join(unknown)}; expected a subset of {', '.join(known_checks)}"
            )
        if "identity" in self.checks and self.hat_count < 2:
            raise ConfigError(f"hat_count must be at least 2, got {self.hat_count}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.truncation_p < 1:
            raise ConfigError(f"truncation_p must be at least 1, got {self.truncation_p}")
        self.st_grid = [tuple(float(v) for v in pair) for pair in self.st_grid]
        if any(len(pair) != 2 for pair in self.st_grid):
            raise ConfigError("st_grid must hold (s, t) pairs")

    @classmethod
    def from_mapping(cls, d: Dict[str, Any]) -> "ExperimentConfig":
        unknown = set(d) - _FIELDS
        if unknown:
            raise ConfigError(f"Unknown config key(s): {', '.join(sorted(unknown))}")
        missing = {"function", "model", "n_grid", "M"} - set(d)
        if missing:
            raise ConfigError(f"Missing config key(s): {', '.join(sorted(missing))}")
        try:
            config = cls(**d)
        except TypeError as e:
            raise ConfigError(f"Invalid config: {e}") from e
        # spec strings are checked before anything is simulated
        config.expansion()
        config.correlation_model()
        return config

    @classmethod
    def load(cls, path_or_url: Union[Path, str], **overrides) -> "ExperimentConfig":
        d = _load_config(path_or_url)
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(d)

    def to_mapping(self) -> Dict[str, Any]:
        d = asdict(self)
        d["st_grid"] = [list(pair) for pair in self.st_grid]
        return d

    def expansion(self):
        return _parse_function_spec(self.function, self.max_order)

    def correlation_model(self):
        return parse_model_spec(self.model)


@dataclass
class Verdict:
    check: str
    status: str
    message: str
    n: Optional[int] = None

    @property
    def failed(self) -> bool:
        return self.status == "fail"


@dataclass
class ExperimentReport:
    config: Dict[str, Any]
    rows: List[Dict[str, Any]]
    cells: List[Dict[str, Any]]
    verdicts: List[Verdict]
    provenance: Dict[str, Any]

    @property
    def passed(self) -> bool:
        return not any(v.failed for v in self.verdicts)

    def to_mapping(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "provenance": self.provenance,
            "rows": self.rows,
            "cells": self.cells,
            "verdicts": [asdict(v) for v in self.verdicts],
            "passed": self.passed,
        }


def _sharp_columns(f, batch: PathBatch, config: ExperimentConfig, shared: Dict) -> Dict:
    rows = key_identity_grid(
        f, batch, config.hat_count, config.st_grid, config.xi_grid, workers=config.workers
    )
    finite = [r["z"] for r in rows if np.isfinite(r["z"])]
    return {
        "identity_max_z": max(finite) if finite else float("inf"),
        "identity_points": len(rows),
        "identity_failures": sum(not r["pass"] for r in rows),
    }


def _variance_columns(f, batch: PathBatch, config: ExperimentConfig, shared: Dict) -> Dict:
    v = empirical_variance(partial_sum(f, batch))
    return {"var_hat": v.var, "var_se": v.se}


def _tv_columns(f, batch: PathBatch, config: ExperimentConfig, shared: Dict) -> Dict:
    d = tv_estimate(partial_sum(f, batch, normalized=True))
    return {
        "tv": d.tv,
        "tv_floor": shared["tv_floor"],
        "kolmogorov": d.kolmogorov,
        "kolmogorov_pvalue": d.kolmogorov_pvalue,
    }


def _stein_columns(f, batch: PathBatch, config: ExperimentConfig, shared: Dict) -> Dict:
    nu = estimate_limits(f, batch, shared["gamma"]).nu_hat
    s = stein_discrepancy(partial_sum(f, batch), nu)
    return {"stein_disc": s.discrepancy, "stein_se": s.se, "stein_max_z": s.max_z}


def _gamma_columns(f, batch: PathBatch, config: ExperimentConfig, shared: Dict) -> Dict:
    gamma = shared["gamma"]
    limits = estimate_limits(f, batch, gamma)
    fg_var, fg_var_se = concentration(gamma)
    return {
        "lambda_hat": limits.lambda_hat,
        "mu_hat": limits.mu_hat,
        "nu_hat": limits.nu_hat,
        "nu_se": limits.nu_se,
        "gamma_fg_var": fg_var,
        "gamma_fg_var_se": fg_var_se,
        "gamma_ff_min": float(gamma.ff.min()),
        "bilinearity_residual": bilinearity_residual(f, batch, gamma, config.st_grid),
        "chaos_tv_diagnostic": chaos_tv_diagnostic(gamma),
    }


def _rate_columns(f, batch: PathBatch, config: ExperimentConfig, shared: Dict) -> Dict:
    return {"nnp21_rate": nnp21_rate(batch.model, batch.n)}


def _truncation_columns(f, batch: PathBatch, config: ExperimentConfig, shared: Dict) -> Dict:
    gap = truncation_gap(f, config.truncation_p, batch)
    return {
        "truncation_gap": gap.second_moment,
        "truncation_gap_se": gap.se,
        "truncation_psi": gap.psi_gap,
        "truncation_bound": gap.bound_constant,
    }


CHECKS: Dict[str, Callable[..., Dict]] = {
    "variance": _variance_columns,
    "tv": _tv_columns,
    "identity": _sharp_columns,
    "gamma": _gamma_columns,
    "stein": _stein_columns,
    "rate": _rate_columns,
    "truncation": _truncation_columns,
}


def _error_status(check: str, e: Exception) -> str:
    return f"error:{check}:{type(e).__name__}"


def _run_cell(check: str, f, batch, config, shared) -> Tuple[str, Dict, Optional[str]]:
    try:
        return check, CHECKS[check](f, batch, config, shared), None
    except LabError as e:
        LOGGER.info("Cell (n = %d, %s) failed: %s", batch.n, check, e)
        return check, {}, f"{type(e).__name__}: {e}"


def _empty_row(config: ExperimentConfig, n: int) -> Dict[str, Any]:
    row = {column: None for column in COLUMNS}
    row.update({"n": n, "seed": config.seed, "code_version": __version__, "M": config.M})
    return row


def _run_n(n: int, f, model, config: ExperimentConfig, shared: Dict) -> Tuple[Dict, List[Dict]]:
    row = _empty_row(config, n)
    row["sigma2"] = shared.get("sigma2")
    cells = []
    checks = list(config.checks)
    if shared.get("degenerate"):
        for check in [c for c in checks if c in _CLT_CHECKS]:
            cells.append({"n": n, "check": check, "status": "skipped", "error": "sigma^2 = 0"})
        checks = [c for c in checks if c not in _CLT_CHECKS]

    LOGGER.debug("n = %d: simulating %d paths", n, config.M)
    try:
        batch = simulate(
            model,
            n,
            config.M,
            config.seed,
            with_double=bool(_SHARP_CHECKS & set(checks)),
            clip=config.clip,
            workers=config.workers,
        )
        local = dict(shared)
        if {"gamma", "stein"} & set(checks):
            local["gamma"] = gamma_estimate(f, batch)
    except LabError as e:
        for check in checks:
            cells.append({"n": n, "check": check, "status": "error", "error": f"{type(e).__name__}: {e}"})
        row["status"] = ";".join(_error_status(c, e) for c in checks) or "error"
        return row, sorted(cells, key=lambda c: config.checks.index(c["check"]))

    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        results = list(
            executor.map(lambda check: _run_cell(check, f, batch, config, local), checks)
        )
    statuses = []
    for check, columns, error in results:
        row.update(columns)
        cells.append(
            {"n": n, "check": check, "status": "ok" if error is None else "error", "error": error}
        )
        if error is not None:
            statuses.append(f"error:{check}:{error.split(':')[0]}")
    row["status"] = ";".join(statuses) or "ok"
    return row, sorted(cells, key=lambda c: config.checks.index(c["check"]))


def run(config: ExperimentConfig) -> ExperimentReport:
    """Runs the whole (n, check) grid of an experiment and writes its report if `out` is set"""
    started = time.perf_counter()
    f = config.expansion()
    model = config.correlation_model()
    shared: Dict[str, Any] = {}

    try:
        variance = limiting_variance(f, model, config.k_lag)
        shared["sigma2"] = variance.sigma2
        shared["degenerate"] = variance.degenerate
    except LabError as e:
        LOGGER.info("No limiting variance for %s on %s: %s", config.function, config.model, e)
    if "tv" in config.checks and not shared.get("degenerate"):
        shared["tv_floor"] = calibrate_tv_floor(config.M, config.seed).floor

    rows, cells = [], []
    for n in config.n_grid:
        row, row_cells = _run_n(n, f, model, config, shared)
        rows.append(row)
        cells.extend(row_cells)

    report = ExperimentReport(
        config=config.to_mapping(),
        rows=rows,
        cells=cells,
        verdicts=evaluate_verdicts(rows, config),
        provenance={
            "seed": config.seed,
            "code_version": __version__,
            "rng": "philox(seed, spawn_key=(replication, copy))",
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_clock_s": round(time.perf_counter() - started, 3),
        },
    )
    for v in report.verdicts:
        LOGGER.info("%s: %s (%s)", v.check, v.status, v.message)
    if config.out is not None:
        write_report(report, Path(config.out))
    return report


def _combined_se(*ses) -> float:
    return float(np.sqrt(sum(se**2 for se in ses)))


def _column(rows: List[Dict], name: str) -> List[Optional[float]]:
    return [row.get(name) for row in rows]


def _non_increasing(values, ses, slack: float) -> Optional[int]:
    """Index of the first row whose value rises above the previous one beyond the noise"""
    for i in range(1, len(values)):
        if values[i] > values[i - 1] + slack * _combined_se(ses[i], ses[i - 1]) + 1e-12:
            return i
    return None


def _variance_verdict(rows, config) -> Verdict:
    sigma2 = rows[-1].get("sigma2")
    if sigma2 is None:
        return Verdict("variance", "fail", "no limiting variance")
    gaps = [abs(r["var_hat"] - sigma2) for r in rows]
    ses = _column(rows, "var_se")
    rising = _non_increasing(gaps, ses, 2.0)
    if rising is not None:
        return Verdict(
            "variance", "fail", f"|var_hat - sigma2| grows to {gaps[rising]:.4g}", rows[rising]["n"]
        )
    if sigma2 == 0.0:
        return Verdict("variance", "pass", f"var_hat decreases to {rows[-1]['var_hat']:.4g}, sigma2 = 0")
    tolerance = max(variance_rtol * sigma2, 4.0 * ses[-1])
    if gaps[-1] > tolerance:
        return Verdict(
            "variance",
            "fail",
            f"var_hat = {rows[-1]['var_hat']:.4g} is {gaps[-1]:.3g} from sigma2 = {sigma2:.4g}",
            rows[-1]["n"],
        )
    return Verdict("variance", "pass", f"var_hat within {tolerance:.3g} of sigma2 = {sigma2:.4g}")


def _tv_verdict(rows, config) -> Verdict:
    tv = _column(rows, "tv")
    floor = rows[-1]["tv_floor"]
    for i in range(1, len(rows)):
        n = rows[i]["n"]
        if tv[i] >= tv[i - 1] and tv[i] > tv_floor_band * floor:
            return Verdict("tv", "fail", f"tv does not decrease: {tv[i - 1]:.4f} then {tv[i]:.4f}", n)
        ks, previous = rows[i]["kolmogorov"], rows[i - 1]["kolmogorov"]
        # a KS statistic the test does not reject is at the noise level of M draws
        if ks >= previous and rows[i]["kolmogorov_pvalue"] < ks_pvalue_level:
            return Verdict(
                "tv", "fail", f"Kolmogorov distance does not decrease: {previous:.4f} then {ks:.4f}", n
            )
    if tv[-1] > 2.0 * floor:
        return Verdict(
            "tv", "fail", f"tv = {tv[-1]:.4f} is above twice the floor {floor:.4f}", rows[-1]["n"]
        )
    ks = rows[-1]["kolmogorov"]
    return Verdict("tv", "pass", f"tv ends at {tv[-1]:.4f}, floor {floor:.4f}, Kolmogorov {ks:.4f}")


def _stein_verdict(rows, config) -> Verdict:
    z = rows[-1]["stein_max_z"]
    if z > pass_z:
        return Verdict("stein", "fail", f"Stein discrepancy at {z:.2f} standard errors", rows[-1]["n"])
    return Verdict("stein", "pass", f"Stein discrepancy within {z:.2f} standard errors of 0")


def _identity_verdict(rows, config) -> Verdict:
    for row in rows:
        if row["identity_failures"]:
            return Verdict(
                "identity",
                "fail",
                f"{row['identity_failures']} of {row['identity_points']} grid points beyond {pass_z} SE",
                row["n"],
            )
    return Verdict("identity", "pass", "every grid point within 4 SE")


def _gamma_verdict(rows, config) -> Verdict:
    for row in rows:
        if row["gamma_ff_min"] < -1e-10:
            return Verdict("gamma", "fail", f"negative Gamma[F,F] = {row['gamma_ff_min']:.3g}", row["n"])
        scale = max(1.0, abs(row["lambda_hat"]) + abs(row["mu_hat"]))
        if row["bilinearity_residual"] > 1e-10 * scale:
            return Verdict(
                "gamma", "fail", f"bilinearity residual {row['bilinearity_residual']:.3g}", row["n"]
            )
    variances = _column(rows, "gamma_fg_var")
    ses = _column(rows, "gamma_fg_var_se")
    # Gamma[F,G] is already constant, e.g. for f = H_1
    negligible = 1e-12 * max(1.0, rows[-1]["nu_hat"] ** 2)
    for i in range(1, len(rows)):
        if variances[i] <= negligible:
            continue
        if variances[i] >= variances[i - 1] - 2.0 * _combined_se(ses[i], ses[i - 1]):
            before, after = variances[i - 1], variances[i]
            return Verdict(
                "gamma",
                "fail",
                f"var Gamma[F,G] does not decrease beyond 2 SE: {before:.4g} then {after:.4g}",
                rows[i]["n"],
            )
    sigma2 = rows[-1].get("sigma2")
    if sigma2 and _single_chaos(config):
        nu = rows[-1]["nu_hat"]
        tolerance = max(nu_rtol * sigma2, pass_z * rows[-1]["nu_se"])
        if abs(nu - sigma2) > tolerance:
            return Verdict(
                "gamma",
                "fail",
                f"nu_hat = {nu:.4g} is not within {tolerance:.3g} of sigma2 = {sigma2:.4g}",
                rows[-1]["n"],
            )
    return Verdict("gamma", "pass", "Gamma is positive, bilinear and concentrates")


def _single_chaos(config) -> bool:
    f = config.expansion()
    return int(np.count_nonzero(np.sqrt(chaos_energies(f)) > f.rank_threshold)) == 1


def _rate_verdict(rows, config) -> Verdict:
    return Verdict("rate", "pass", "reference curve only")


def _truncation_verdict(rows, config) -> Verdict:
    psi = rows[-1]["truncation_psi"]
    if psi == 0.0:
        worst = max(rows, key=lambda r: r["truncation_gap"])
        if worst["truncation_gap"] > 1e-12:
            return Verdict("truncation", "fail", "nonzero gap with nothing truncated", worst["n"])
        return Verdict("truncation", "pass", "nothing truncated")
    worst = max(rows, key=lambda r: r["truncation_gap"] / psi)
    constant = worst["truncation_gap"] / psi
    bound = worst["truncation_bound"]
    if bound is not None and constant > bound + pass_z * worst["truncation_gap_se"] / psi:
        return Verdict(
            "truncation",
            "fail",
            f"fitted constant {constant:.4g} exceeds the covariance bound {bound:.4g}",
            worst["n"],
        )
    return Verdict("truncation", "pass", f"fitted constant {constant:.4g}, bound {bound}")


_VERDICTS = {
    "variance": _variance_verdict,
    "tv": _tv_verdict,
    "identity": _identity_verdict,
    "gamma": _gamma_verdict,
    "stein": _stein_verdict,
    "rate": _rate_verdict,
    "truncation": _truncation_verdict,
}


def evaluate_verdicts(rows: List[Dict[str, Any]], config: ExperimentConfig) -> List[Verdict]:
    """Pass/fail per requested check, from the report rows alone"""
    verdicts = []
    for row in rows:
        if row.get("status") not in ("ok", None):
            verdicts.append(Verdict("cells", "fail", f"row status {row['status']}", row.get("n")))
    degenerate = rows and rows[-1].get("sigma2") == 0.0
    for check in config.checks:
        if degenerate and check in _CLT_CHECKS:
            verdicts.append(Verdict(check, "skipped", "sigma^2 = 0, the limit is degenerate"))
            continue
        usable = [r for r in rows if r.get("status") == "ok"]
        if not usable:
            verdicts.append(Verdict(check, "fail", "no row completed"))
            continue
        try:
            verdicts.append(_VERDICTS[check](usable, config))
        except (KeyError, TypeError) as e:
            verdicts.append(Verdict(check, "fail", f"rows lack the columns of {check}: {e}"))
    return verdicts


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def report_csv(report: ExperimentReport) -> str:
    buffer = io.StringIO()
    buffer.write(f"# bmlab {__version__} generated {report.provenance['timestamp']}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(COLUMNS))
    for row in report.rows:
        writer.writerow([_cell(row.get(column)) for column in COLUMNS])
    return buffer.getvalue()


def _literal(column: str, value) -> Literal:
    if column in ("n", "seed", "M", "identity_points", "identity_failures"):
        return Literal(int(value), datatype=XSD.integer)
    if column in ("code_version", "status"):
        return Literal(str(value))
    return Literal(float(value), datatype=XSD.double)


def report_graph(config: Dict[str, Any], rows: List[Dict[str, Any]]) -> Graph:
    """The rows as one qb:ObservationGroup of the experiment"""
    experiment = BNode()
    group, g = _create_observation_group(
        experiment,
        LAB.ExperimentReport,
        {
            LAB.functionSpec: Literal(config["function"]),
            LAB.modelSpec: Literal(config["model"]),
        },
    )
    for row in rows:
        values = {
            COLUMNS[c]: _literal(c, v) for c, v in row.items() if c in COLUMNS and v is not None
        }
        g += _create_observation(group, values)
    _bind_extra_prefixes(g, EXTRA_PREFIXES)
    return g


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: ExperimentReport, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / report_files["csv"], report_csv(report))
    _atomic_write(out / report_files["json"], json.dumps(report.to_mapping(), indent=2))
    g = report_graph(report.config, report.rows)
    _atomic_write(out / report_files["rdf"], g.serialize(format="longturtle"))
    LOGGER.info("Report written to %s", out)


def _read_report(report_path: Union[Path, str]) -> Dict[str, Any]:
    path = Path(report_path)
    if path.is_dir():
        path = path / report_files["json"]
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ReportParseError(f"No report at {path}") from e
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ReportParseError(f"{path} is not a well-formed report: {e}") from e
    if not isinstance(data, dict) or not {"config", "rows"} <= set(data):
        raise ReportParseError(f"{path} lacks the config or rows of a report")
    if not isinstance(data["rows"], list) or not all(isinstance(r, dict) for r in data["rows"]):
        raise ReportParseError(f"The rows of {path} must be a list of records")
    return data


def verify(report_path: Union[Path, str], validate: bool = False) -> List[Verdict]:
    """Re-evaluates the verdicts of a stored report without simulating anything"""
    data = _read_report(report_path)
    try:
        config = ExperimentConfig.from_mapping(data["config"])
    except ConfigError as e:
        raise ReportParseError(f"The stored config is invalid: {e}") from e
    verdicts = evaluate_verdicts(data["rows"], config)

    if validate:
        g = report_graph(data["config"], data["rows"])
        conforms, _, report_text = val(g, shacl_graph=str(REPORT_SHAPES))
        if not conforms:
            verdicts.append(Verdict("shapes", "fail", report_text))
        else:
            verdicts.append(Verdict("shapes", "pass", "rows conform to the report shapes"))
    return verdicts
