"""
Command line parsing, config loading and the RDF building blocks of reports.

usage: bmlab [-h] {expand,validate-model,simulate,variance,clt-check,sharp-check,run,verify} ...

Every subcommand accepts the shared options --seed, --out, --workers, --config
and --log-level. Run `bmlab <subcommand> -h` for the rest.
"""
import argparse
import json
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import httpx
import numpy as np
from numpy.polynomial import hermite_e
from rdflib import BNode, Graph, Literal, Namespace, URIRef
from rdflib.namespace import RDF
from rdflib.term import Node

from bmlab._LAB import LAB
from bmlab.errors import ConfigError
from bmlab.hermite import HermiteExpansion, QuadratureRule, expand
from reference_data.reference import (
    builtin_functions,
    builtin_models,
    default_max_order,
    default_workers,
    mean_abs_normal,
)

QB = Namespace("http://purl.org/linked-data/cube#")

CONFIG_SUFFIXES = {
    ".toml": "application/toml",
    ".json": "application/json",
}

EXTRA_PREFIXES = {
    "lab": LAB,
    "qb": QB,
}


def _shared_options() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, help="Seed of the random streams")
    shared.add_argument(
        "--out",
        help="An output path. Experiment outputs go to this directory; single results are "
        "written to this file rather than returned to standard out",
    )
    shared.add_argument(
        "--workers",
        type=int,
        help=f"Threads used for independent cells and replications (default {default_workers})",
    )
    shared.add_argument(
        "--config",
        help="The path of a TOML or JSON experiment config or the URL of one online",
    )
    shared.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    return shared


def _create_parser():
    shared = _shared_options()
    parser = argparse.ArgumentParser(
        prog="bmlab", description="Numerical laboratory for the Breuer-Major theorem"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", parents=[shared], help="Hermite expansion of a function spec")
    p.add_argument("function", help=f"One of {', '.join(builtin_functions)}, e.g. hermite:2")
    p.add_argument("--max-order", type=int, default=default_max_order)

    p = sub.add_parser(
        "validate-model", parents=[shared], help="Circulant embedding spectrum of a model"
    )
    p.add_argument("model", help=f"One of {', '.join(builtin_models)}, e.g. geom:0.5")
    p.add_argument("-n", type=int, required=True)

    p = sub.add_parser("simulate", parents=[shared], help="Simulate a path batch to <out>.bin")
    p.add_argument("model")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-M", type=int, required=True)
    p.add_argument("--double", action="store_true", help="Also simulate the doubled copy")
    p.add_argument("--clip", action="store_true", help="Clip negative embedding eigenvalues")

    p = sub.add_parser("variance", parents=[shared], help="Limiting variance sigma^2")
    p.add_argument("function")
    p.add_argument("model")
    p.add_argument("--k-lag", type=int)
    p.add_argument("--max-order", type=int, default=default_max_order)
    p.add_argument("-n", type=int, help="Also report the empirical variance at this n")
    p.add_argument("-M", type=int, default=1000)

    for name, text in [
        ("clt-check", "Distance of normalized partial sums to the standard normal"),
        ("sharp-check", "The Laplace/Fourier identity of the sharp gradient"),
    ]:
        p = sub.add_parser(name, parents=[shared], help=text)
        p.add_argument("function")
        p.add_argument("model")
        p.add_argument("-n", type=int, required=True)
        p.add_argument("-M", type=int, required=True)
        p.add_argument("--max-order", type=int, default=default_max_order)
        if name == "sharp-check":
            p.add_argument("--hat-count", type=int)

    sub.add_parser("run", parents=[shared], help="Run an experiment config")

    p = sub.add_parser("verify", parents=[shared], help="Re-evaluate the verdicts of a report")
    p.add_argument("report", help="A report.json or the directory holding one")
    p.add_argument(
        "--validate",
        action="store_true",
        help="Also validate the RDF form of the rows against the report shapes",
    )
    return parser


def _get_valid_output_dir(path: Path) -> Path:
    """Checks that the parent of an output path is an existing directory and returns it"""
    if not os.path.isdir(path.parent):
        raise argparse.ArgumentTypeError(
            f"The output path you specified, {path}, does not indicate a valid directory"
        )
    return path.parent


def _input_is_a_file(s: Union[Path, str]) -> bool:
    return Path(s).is_file()


def _load_config(path_or_url: Union[Path, str]) -> Dict:
    """Reads a TOML or JSON config from a file or downloads it from a URL"""
    if _input_is_a_file(path_or_url):
        text = Path(path_or_url).read_text()
        suffix = Path(path_or_url).suffix
        if suffix not in CONFIG_SUFFIXES:
            raise ConfigError(
                f"The config {path_or_url} must be a file of type {', '.join(CONFIG_SUFFIXES)}"
            )
    elif str(path_or_url).startswith(("http://", "https://")):
        try:
            d = httpx.get(str(path_or_url), follow_redirects=True)
            d.raise_for_status()
        except httpx.HTTPError as e:
            raise ConfigError(f"Could not download the config {path_or_url}: {e}") from e
        text = d.text
        media_type = d.headers.get("Content-Type", "").split(";")[0]
        suffix = ".json" if media_type == "application/json" else Path(str(path_or_url)).suffix
    else:
        raise ConfigError(f"The config {path_or_url} is neither a file nor a URL")

    try:
        if suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Cannot parse the config {path_or_url}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"The config {path_or_url} must hold a table of settings")
    return data


def _parse_function_spec(spec: str, max_order: int = default_max_order) -> HermiteExpansion:
    """'hermite:m', 'coeffs:[c0,...]', 'poly:[a0,...]', 'abs' or 'abs-centered'"""
    name, _, argument = spec.strip().partition(":")
    if name not in builtin_functions:
        raise ConfigError(
            f"Unknown function {spec!r}; expected one of {', '.join(builtin_functions)}"
        )
    if name == "abs":
        return expand(np.abs, max_order=max_order, rule=QuadratureRule.split_legendre())
    if name == "abs-centered":
        # E|N| = sqrt(2/pi) exactly, so only quadrature error is left in c_0
        f = lambda x: np.abs(x) - mean_abs_normal
        return expand(f, max_order=max_order, rule=QuadratureRule.split_legendre()).center()
    try:
        if name == "hermite":
            m = int(argument)
            if m < 0:
                raise ValueError("the order must be nonnegative")
            coeffs = np.zeros(m + 1)
            coeffs[m] = 1.0
        else:
            values = json.loads(argument)
            if not isinstance(values, list) or not values:
                raise ValueError("a non-empty list is expected")
            coeffs = np.asarray(values, dtype=float)
            if name == "poly":
                coeffs = hermite_e.poly2herme(coeffs)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"Cannot parse the function {spec!r}: {e}") from e
    return HermiteExpansion.from_coefficients(coeffs)


def _bind_extra_prefixes(g: Graph, prefixes: dict):
    for k, v in prefixes.items():
        g.bind(k, v)


def _create_observation_group(
    experiment: Node, report_class: URIRef, properties: Optional[Dict[URIRef, Literal]] = None
) -> Tuple[Node, Graph]:
    """Creates an ExperimentReport (ObservationGroup) holding one Observation per row

    :param experiment: the node of the experiment the report belongs to
    :param report_class: the class of the report, e.g. lab:ExperimentReport
    :param properties: literal properties of the experiment, e.g. its function spec
    :return: the ID of the report and its Graph
    """
    g = Graph()
    g.add((experiment, RDF.type, LAB.Experiment))
    for p, o in (properties or {}).items():
        g.add((experiment, p, o))

    report = BNode()
    g.add((experiment, LAB.hasReport, report))
    g.add((report, RDF.type, report_class))
    g.add((report, RDF.type, QB.ObservationGroup))
    g.add((report, LAB.refExperiment, experiment))
    return report, g


def _create_observation(report: Node, values: Dict[URIRef, Literal]) -> Graph:
    """Creates the Observation of one report row

    :param report: the ExperimentReport the row belongs to
    :param values: measure property to value, e.g. lab:varHat to 3.31
    :return: a graph of the Observation
    """
    g = Graph()
    obs = BNode()
    g.add((obs, RDF.type, QB.Observation))
    g.add((obs, RDF.type, LAB.Row))
    g.add((report, QB.observation, obs))
    for p, o in values.items():
        g.add((obs, p, o))
    return g
