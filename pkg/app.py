"""Command-line entry point for the clustered-HetNet coverage toolkit."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from typing import List, Optional

from controllers.experiment_manager import DEFAULT_TOLERANCE, ExperimentManager, SweepRow
from services.analytic_engine import (
    ModelMismatchError,
    coverage,
    coverage_bounds,
    mixed_coverage,
    ppp_limit_coverage,
)
from services.monte_carlo import estimate
from services.network_model import ConfigValidationError, effective_network
from services.results_writer import write_json, write_sweep_csv
from utils.config_loader import ConfigError, LoadedConfig, load_config
from utils.units import db_to_linear

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_CONFIG_ERROR = 2

LOG_FORMAT = "%(asctime)s [%(levelname)s] [%(name)s] %(message)s"

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Downlink coverage of clustered users in K-tier HetNets"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML or JSON configuration file")
    common.add_argument("--seed", type=int, help="Override the Monte Carlo master seed")
    common.add_argument("--trials", type=int, help="Override the Monte Carlo trial count")
    common.add_argument("--workers", type=int, help="Worker threads for trials and sweep points")
    common.add_argument("--out", help="Output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="Output format")
    common.add_argument("--no-sim", action="store_true", help="Skip the Monte Carlo simulation")
    common.add_argument("--tau-db", type=float, help="SIR threshold in dB")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="Warnings only")

    verbs = parser.add_subparsers(dest="verb", required=True)
    verbs.add_parser("coverage", parents=[common], help="Coverage at a single threshold")
    verbs.add_parser("sweep", parents=[common], help="Sweep the configured variable")
    validate = verbs.add_parser(
        "validate", parents=[common], help="Cross-validate analysis against simulation"
    )
    validate.add_argument(
        "--tolerance", type=float, default=DEFAULT_TOLERANCE, help="Allowed absolute gap"
    )
    verbs.add_parser("limits", parents=[common], help="PPP limit and coverage bounds only")
    return parser


def _apply_overrides(loaded: LoadedConfig, args: argparse.Namespace) -> LoadedConfig:
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.workers is not None:
        changes["workers"] = args.workers
    settings = replace(loaded.settings, **changes) if changes else loaded.settings
    sweep = loaded.sweep
    if args.tau_db is not None:
        sweep = replace(sweep, tau_db=args.tau_db)
    return LoadedConfig(loaded.network, settings, sweep)


def _metadata(loaded: LoadedConfig, simulate: bool) -> dict:
    meta = {"master_seed": loaded.settings.master_seed}
    if simulate:
        meta["trials"] = loaded.settings.trials
    return meta


def _cmd_coverage(loaded: LoadedConfig, args: argparse.Namespace) -> int:
    cfg, settings = loaded.network, loaded.settings
    tau_db = loaded.sweep.tau_db
    tau = db_to_linear(tau_db)
    report = coverage(tau, cfg, effective_network(cfg))
    sim = None if args.no_sim else estimate(cfg, tau, settings)

    if args.format == "csv":
        row = SweepRow(
            variable="tau_db",
            value=tau_db,
            assoc=report.assoc,
            analytic=report.total,
            lower=report.lower_bound,
            upper=report.upper_bound,
            ppp_limit=report.ppp_limit,
            sim_mean=sim.mean if sim else None,
            sim_half_width=sim.half_width if sim else None,
        )
        write_sweep_csv(args.out, [row], cfg.K, _metadata(loaded, sim is not None))
        return EXIT_OK

    payload = _metadata(loaded, sim is not None)
    payload.update(report.as_dict())
    payload["tau_db"] = tau_db
    payload["sim"] = sim.as_dict() if sim else None
    write_json(args.out, payload)
    return EXIT_OK


def _cmd_sweep(loaded: LoadedConfig, args: argparse.Namespace) -> int:
    simulate = not args.no_sim
    manager = ExperimentManager(workers=loaded.settings.workers)
    rows = manager.run_sweep(loaded.network, loaded.sweep, loaded.settings, simulate=simulate)
    meta = _metadata(loaded, simulate)
    if args.format == "json":
        meta["rows"] = [row.as_dict() for row in rows]
        write_json(args.out, meta)
    else:
        write_sweep_csv(args.out, rows, loaded.network.K, meta)
    return EXIT_OK


def _cmd_validate(loaded: LoadedConfig, args: argparse.Namespace) -> int:
    if args.no_sim:
        logger.warning("--no-sim ignored: validation needs the simulation")
    sweep = loaded.sweep
    tau_list = list(sweep.values) if sweep.variable == "tau_db" else [sweep.tau_db]
    manager = ExperimentManager(workers=loaded.settings.workers)
    report = manager.cross_validate(loaded.network, tau_list, loaded.settings, args.tolerance)
    write_json(args.out, report.as_dict())
    return EXIT_OK if report.passed else EXIT_VALIDATION_FAILED


def _cmd_limits(loaded: LoadedConfig, args: argparse.Namespace) -> int:
    cfg = loaded.network
    net = effective_network(cfg)
    tau_db = loaded.sweep.tau_db
    tau = db_to_linear(tau_db)
    general = coverage_bounds(tau, cfg, net, method="general")
    try:
        closed = coverage_bounds(tau, cfg, net, method="closed")
    except ModelMismatchError:
        closed = None
    lower, upper = closed or general
    record = {
        "tau_db": tau_db,
        "cov_lower": lower,
        "cov_upper": upper,
        "cov_ppp_limit": ppp_limit_coverage(tau, cfg, net),
        "bound_residual": (
            max(abs(closed[0] - general[0]), abs(closed[1] - general[1])) if closed else None
        ),
    }
    if cfg.ppp_user_density > 0 or cfg.extra_clusters:
        record["mixed_coverage"] = mixed_coverage(tau, cfg, net)

    if args.format == "csv":
        row = SweepRow(
            variable="tau_db",
            value=tau_db,
            assoc=tuple(float("nan") for _ in range(cfg.K + 1)),
            analytic=None,
            lower=lower,
            upper=upper,
            ppp_limit=record["cov_ppp_limit"],
        )
        write_sweep_csv(args.out, [row], cfg.K, _metadata(loaded, False))
        return EXIT_OK
    record.update(_metadata(loaded, False))
    write_json(args.out, record)
    return EXIT_OK


COMMANDS = {
    "coverage": _cmd_coverage,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
    "limits": _cmd_limits,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)

    try:
        loaded = _apply_overrides(load_config(args.config), args)
    except (ConfigError, ConfigValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        return COMMANDS[args.verb](loaded, args)
    except ConfigValidationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
