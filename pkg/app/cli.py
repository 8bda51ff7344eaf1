"""
Command-line entry point.

    python -m app table1 --p 2 --n 10 --reps 20 --seed 7
    python -m app table2 --reps 300 --format json --out table2.json
    python -m app sample --family vmf --dim 2 --kappa 2 --n 100 --seed 1 > data.jsonl
    python -m app estimate --data data.jsonl --estimator adaptive_mre
    python -m app frechet-mean --data data.jsonl

Exit codes: 0 on success, 1 on configuration or input errors, 2 on
numerical failures. Results go to stdout (or ``--out``), logs to stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import dotenv_values
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import ConfigError, EquiMeanError
from app.core.logging import configure_logging
from app.models.requests import EstimateRequest, FrechetRequest, SampleRequest
from app.models.results import McmcConfig, RandomWalk
from app.services.datafile import dumps_points, points_csv, read_points
from app.services.harness import OVERRIDE_KEYS, format_csv, format_json, run_scenario, run_table1, run_table2
from app.services.operations import estimation_service

logger = logging.getLogger(__name__)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _floats(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from exc


def _output_options() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="write results here instead of stdout")
    common.add_argument("--config", help="flat key=value file; keys mirror flag names")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    common.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    return common


def _chain_options() -> argparse.ArgumentParser:
    chain = _Parser(add_help=False)
    chain.add_argument("--mcmc-iters", type=int, help="Metropolis-Hastings iterations per chain")
    chain.add_argument("--burn-in", type=int, help="discarded iterations at the start of each chain")
    chain.add_argument("--thin", type=int, help="keep every k-th retained state")
    chain.add_argument("--rw-scale", type=float, help="use random-walk proposals of this scale")
    chain.add_argument("--inner-draws", type=int, help="Monte Carlo draws of the Wishart inner loops")
    chain.add_argument("--population-draws", type=int, help="draws behind each population Fréchet mean")
    return chain


def _simulation_options() -> argparse.ArgumentParser:
    sim = _Parser(add_help=False)
    sim.add_argument("--reps", type=int, help="replicates per scenario")
    sim.add_argument("--workers", type=int, help=f"worker processes (env EQUIMEAN_WORKERS, default {settings.EQUIMEAN_WORKERS})")
    sim.add_argument("--rotate-truth", action="store_true", help="draw a random isometry of the true parameter")
    sim.add_argument("--estimators", help="comma-separated subset of estimators")
    return sim


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="equimean", description="Equivariant estimation of Fréchet means")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    output, chain, sim = _output_options(), _chain_options(), _simulation_options()
    subs: Dict[str, argparse.ArgumentParser] = {}

    table1 = commands.add_parser("table1", parents=[output, chain, sim], help="Wishart risk table")
    table1.add_argument("--p", type=int, help="only scenarios with this matrix size")
    table1.add_argument("--n", type=int, help="only scenarios with these degrees of freedom")
    subs["table1"] = table1

    table2 = commands.add_parser("table2", parents=[output, chain, sim], help="torus risk table with ratios")
    table2.add_argument("--kappa", type=float, help="only scenarios with this concentration")
    table2.add_argument("--lambda", dest="lambda_", type=float, help="only scenarios with this interaction")
    table2.add_argument("--n", type=int, help="only scenarios with this sample size")
    subs["table2"] = table2

    scenario = commands.add_parser("scenario", parents=[output, chain, sim], help="one named scenario")
    scenario.add_argument("name", help="e.g. table1_p2_n10 or table2_k2_l3_n25")
    subs["scenario"] = scenario

    estimate = commands.add_parser("estimate", parents=[output, chain], help="one estimator on a data file")
    estimate.add_argument("--data", required=True, help="point data file")
    estimate.add_argument(
        "--estimator",
        required=True,
        choices=("frechet", "mre_closed_form", "mre_mc", "adaptive_mre", "mle", "mom_orbit"),
    )
    estimate.add_argument("--metric", choices=("geodesic", "extrinsic"))
    estimate.add_argument("--orbit", help='orbit label as JSON, e.g. \'{"kind": "vmf", "kappa": 2}\'')
    estimate.add_argument("--orbit-estimator", choices=("mle", "mom"), default="mle")
    estimate.add_argument("--dof", type=int, help="Wishart degrees of freedom")
    estimate.add_argument("--scaling", action="store_true", help="add positive scalings to the Wishart group")
    subs["estimate"] = estimate

    sample = commands.add_parser("sample", parents=[output], help="draw from a family")
    sample.add_argument("--family", required=True, choices=("vmf", "hyperbolic", "langevin", "wishart", "torus"))
    sample.add_argument("--dim", type=int, required=True, help="k for sphere/hyperboloid, p otherwise")
    sample.add_argument("--k", type=int, default=1, help="frame columns (langevin)")
    sample.add_argument("--kappa", type=_floats)
    sample.add_argument("--lambda", dest="lambda_", type=_floats)
    sample.add_argument("--dof", type=int)
    sample.add_argument("--radius", type=float, default=1.0)
    sample.add_argument("--n", type=int, required=True)
    subs["sample"] = sample

    frechet = commands.add_parser("frechet-mean", parents=[output], help="sample Fréchet mean of a data file")
    frechet.add_argument("--data", required=True, help="point data file")
    frechet.add_argument("--metric", choices=("geodesic", "extrinsic"))
    subs["frechet-mean"] = frechet

    return parser, subs


def _config_defaults(path: str, sub: argparse.ArgumentParser) -> Dict[str, Any]:
    """Translate a key=value file into parser defaults for ``sub``."""
    if not Path(path).is_file():
        raise ConfigError(f"config file {path} not found")
    actions = {a.option_strings[0].lstrip("-"): a for a in sub._actions if a.option_strings}
    defaults: Dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        action = actions.get(key)
        if action is None or action.dest in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r} in {path}")
        value = "" if raw is None else raw.strip()
        if action.nargs == 0:
            if value.lower() not in _TRUE | _FALSE:
                raise ConfigError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[action.dest] = value.lower() in _TRUE
        else:
            defaults[action.dest] = value
    return defaults


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        subs[args.command].set_defaults(**_config_defaults(args.config, subs[args.command]))
        args = parser.parse_args(argv)
    return args


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = {key.replace("lambda_", "lambda"): value for key, value in vars(args).items()}
    return {k: v for k, v in values.items() if k in OVERRIDE_KEYS and v is not None and v is not False}


def _mcmc(args: argparse.Namespace) -> McmcConfig:
    fields: Dict[str, Any] = {"seed": args.seed}
    if args.mcmc_iters is not None:
        fields["iterations"] = args.mcmc_iters
        if args.burn_in is None and args.mcmc_iters <= settings.MCMC_BURN_IN:
            fields["burn_in"] = args.mcmc_iters // 3
    if args.burn_in is not None:
        fields["burn_in"] = args.burn_in
    if args.thin is not None:
        fields["thin"] = args.thin
    if args.rw_scale is not None:
        fields["proposal"] = RandomWalk(scale=args.rw_scale)
    return McmcConfig(**fields)


def _rows_output(rows: list, fmt: Optional[str]) -> str:
    return format_json(rows) if fmt == "json" else format_csv(rows)


def _run(args: argparse.Namespace) -> str:
    if args.command == "table1":
        return _rows_output(run_table1(_overrides(args)), args.format)
    if args.command == "table2":
        return _rows_output(run_table2(_overrides(args)), args.format)
    if args.command == "scenario":
        return _rows_output(run_scenario(args.name, _overrides(args)), args.format)

    if args.command == "sample":
        request = SampleRequest(
            family=args.family,
            dim=args.dim,
            k=args.k,
            kappa=args.kappa,
            lam=args.lambda_,
            dof=args.dof,
            radius=args.radius,
            n=args.n,
            seed=args.seed,
        )
        points = estimation_service.draw_sample(request)
        return points_csv(points) if args.format == "csv" else dumps_points(points)

    if args.command == "frechet-mean":
        result = estimation_service.frechet_mean(FrechetRequest(points=read_points(args.data), metric=args.metric))
        if args.format == "csv":
            return points_csv([result.mean])
        return result.model_dump_json(indent=2) + "\n"

    try:
        orbit = json.loads(args.orbit) if args.orbit else None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--orbit is not valid JSON: {exc}") from exc
    request = EstimateRequest(
        estimator=args.estimator,
        metric=args.metric,
        orbit=orbit,
        orbit_estimator=args.orbit_estimator,
        dof=args.dof,
        scaling=args.scaling,
        mcmc=_mcmc(args),
        inner_draws=args.inner_draws,
        population_draws=args.population_draws,
        seed=args.seed,
    )
    report = estimation_service.estimate(read_points(args.data), request)
    if args.format == "csv":
        if report.estimate is None:
            raise ConfigError(f"{args.estimator} yields an orbit, not a point; use --format json")
        return points_csv([report.estimate])
    return report.model_dump_json(indent=2, by_alias=True) + "\n"


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    try:
        args = parse_args(argv)
        configure_logging(args.log_level)
        output = _run(args)
    except ValidationError as exc:
        logger.error(f"invalid input: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EquiMeanError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code

    if args.out:
        Path(args.out).write_text(output)
        logger.info(f"Wrote {args.out}")
    else:
        sys.stdout.write(output)
    return 0
