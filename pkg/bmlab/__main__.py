"""
Numerical laboratory for the Breuer-Major theorem.

usage: bmlab [-h] {expand,validate-model,simulate,variance,clt-check,sharp-check,run,verify} ...

Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 numerical or model error.
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

from bmlab.clt import (
    calibrate_tv_floor,
    empirical_variance,
    limiting_variance,
    partial_sum,
    stein_discrepancy,
    tv_estimate,
)
from bmlab.errors import LabError
from bmlab.gaussproc import parse_model_spec, save_batch, simulate, validate
from bmlab.labcli import ExperimentConfig, run, verify
from bmlab.malliavin import key_identity_grid
from bmlab.parser import _create_parser, _get_valid_output_dir, _parse_function_spec
from reference_data.reference import default_hat_count, default_k_lag, exit_codes, pass_z


def _emit(document: dict, out: Optional[str]):
    text = json.dumps(document, indent=2)
    if out is None:
        print(text)
    else:
        path = Path(out)
        _get_valid_output_dir(path)
        path.write_text(text)


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _workers(args) -> int:
    return 1 if args.workers is None else args.workers


def _expand(args) -> int:
    _emit(_parse_function_spec(args.function, args.max_order).to_dict(), args.out)
    return exit_codes["pass"]


def _validate_model(args) -> int:
    report = validate(parse_model_spec(args.model), args.n)
    _emit(asdict(report), args.out)
    return exit_codes["pass"] if report.psd else exit_codes["check_failure"]


def _simulate(args, parser) -> int:
    if args.out is None:
        parser.error("simulate needs --out, the stem of the .bin and .json files")
    batch = simulate(
        parse_model_spec(args.model),
        args.n,
        args.M,
        _seed(args),
        with_double=args.double,
        clip=args.clip,
        workers=_workers(args),
    )
    _get_valid_output_dir(Path(args.out))
    binary, sidecar = save_batch(batch, args.out)
    print(f"{binary}\n{sidecar}")
    return exit_codes["pass"]


def _variance(args) -> int:
    f = _parse_function_spec(args.function, args.max_order)
    model = parse_model_spec(args.model)
    report = limiting_variance(f, model, args.k_lag or default_k_lag)
    document = {
        "sigma2": report.sigma2,
        "k_lag": report.k_lag,
        "max_order": report.max_order,
        "order_tail": report.order_tail,
        "lag_tail": report.lag_tail,
        "summable": report.summability.converged,
        "degenerate": report.degenerate,
    }
    if args.n is not None:
        batch = simulate(model, args.n, args.M, _seed(args), workers=_workers(args))
        document["empirical"] = asdict(empirical_variance(partial_sum(f, batch)))
    _emit(document, args.out)
    return exit_codes["pass"]


def _clt_check(args) -> int:
    f = _parse_function_spec(args.function, args.max_order)
    batch = simulate(parse_model_spec(args.model), args.n, args.M, _seed(args), workers=_workers(args))
    sample = partial_sum(f, batch, normalized=True)
    distance = tv_estimate(sample)
    floor = calibrate_tv_floor(args.M, _seed(args))
    stein = stein_discrepancy(sample, 1.0)
    passed = distance.tv <= 2.0 * floor.floor and stein.max_z <= pass_z
    _emit(
        {
            "n": args.n,
            "M": args.M,
            "tv": distance.tv,
            "tv_floor": floor.floor,
            "kolmogorov": distance.kolmogorov,
            "kolmogorov_pvalue": distance.kolmogorov_pvalue,
            "stein": stein.rows,
            "pass": passed,
        },
        args.out,
    )
    return exit_codes["pass"] if passed else exit_codes["check_failure"]


def _sharp_check(args) -> int:
    f = _parse_function_spec(args.function, args.max_order)
    batch = simulate(
        parse_model_spec(args.model), args.n, args.M, _seed(args), workers=_workers(args)
    )
    rows = key_identity_grid(
        f, batch, args.hat_count or default_hat_count, workers=_workers(args)
    )
    _emit({"n": args.n, "M": args.M, "identity": rows}, args.out)
    passed = all(row["pass"] for row in rows)
    return exit_codes["pass"] if passed else exit_codes["check_failure"]


def _run(args, parser) -> int:
    if args.config is None:
        parser.error("run needs --config")
    config = ExperimentConfig.load(args.config, seed=args.seed, out=args.out, workers=args.workers)
    report = run(config)
    for v in report.verdicts:
        print(f"{v.check}: {v.status} - {v.message}" + (f" (n = {v.n})" if v.n else ""))
    return exit_codes["pass"] if report.passed else exit_codes["check_failure"]


def _verify(args) -> int:
    verdicts = verify(args.report, validate=args.validate)
    for v in verdicts:
        print(f"{v.check}: {v.status} - {v.message}" + (f" (n = {v.n})" if v.n else ""))
    failed = any(v.failed for v in verdicts)
    return exit_codes["check_failure"] if failed else exit_codes["pass"]


def main(argv: Optional[List[str]] = None) -> int:
    parser = _create_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )

    commands = {
        "expand": lambda: _expand(args),
        "validate-model": lambda: _validate_model(args),
        "simulate": lambda: _simulate(args, parser),
        "variance": lambda: _variance(args),
        "clt-check": lambda: _clt_check(args),
        "sharp-check": lambda: _sharp_check(args),
        "run": lambda: _run(args, parser),
        "verify": lambda: _verify(args),
    }
    try:
        return commands[args.command]()
    except LabError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except argparse.ArgumentTypeError as e:
        print(str(e), file=sys.stderr)
        return exit_codes["usage"]


if __name__ == "__main__":
    sys.exit(main())
