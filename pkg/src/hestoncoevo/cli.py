"""Experiment command line.

Every command is deterministic under ``--seed``, writes tidy CSVs plus a JSON
sidecar with the fully resolved configuration, and exits 2 on configuration
or input errors. Plot rendering is out of scope by design; the CSVs are the
deliverable.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (ExperimentSettings, apply_config_file, cmd_archstats,
                          cmd_calibrate_real, cmd_convergence, cmd_overfit,
                          cmd_price, cmd_ttt)
from .params import ParamBox
from .pricing import QuadratureSpec


def _parse_grid(text: str):
    try:
        ks, ts = text.lower().split("x")
        return int(ks), int(ts)
    except Exception:
        raise argparse.ArgumentTypeError(f"grid must look like 8x5, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hestoncoevo",
        description="Heston surface calibration experiments: co-evolutionary GA + "
                    "neuroevolved inverse networks, with plain-GA and L-BFGS baselines.")
    parser.add_argument("--seed", type=int, default=0, help="root random seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--generations", type=int, default=None,
                        help="evolutionary generations (default from config/Table defaults)")
    parser.add_argument("--population", type=int, default=None, help="GA population size")
    parser.add_argument("--grid", type=_parse_grid, default=None,
                        help="surface grid as KxT, e.g. 8x5")
    parser.add_argument("--box", default=None, help="parameter-box file")
    parser.add_argument("--threads", type=int, default=1, help="parallel trial workers")
    parser.add_argument("--strict-quadrature", action="store_true",
                        help="raise on quadrature non-convergence instead of trusting defaults")
    parser.add_argument("--spot", type=float, default=None, help="spot level for synthetic scenarios")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="price one surface and write CSV/JSON")
    p.add_argument("--params", default=None, help="parameter file (kappa = ... lines)")

    p = sub.add_parser("convergence", help="plain GA vs co-evolution RMSE per generation")
    p.add_argument("--trials", type=int, default=1)

    p = sub.add_parser("ttt", help="time-to-threshold versus an L-BFGS reference")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--max-generations", type=int, default=None)

    p = sub.add_parser("overfit", help="LHS vs GA-history training diagnostic (2x2)")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--budget-epochs", type=int, default=150)
    p.add_argument("--lhs-size", type=int, default=2000)
    p.add_argument("--history-generations", type=int, default=40)

    p = sub.add_parser("archstats", help="architecture statistics at checkpoints")
    p.add_argument("--checkpoints", default="20,40,60,80,100",
                   help="comma-separated generation checkpoints")

    p = sub.add_parser("calibrate-real", help="calibrate to an option-chain CSV")
    p.add_argument("--chain", required=True, help="option chain CSV")
    p.add_argument("--chain-spot", type=float, required=True, help="underlying spot")
    p.add_argument("--rates", default=None, help="rates CSV (weeks, rate_percent)")
    p.add_argument("--truth", default=None, help="ground-truth params file (synthetic-as-real runs)")
    p.add_argument("--checkpoints", default="20,40,60,80,100")
    p.add_argument("--lhs-size", type=int, default=400)

    return parser


def resolve_settings(args) -> ExperimentSettings:
    settings = ExperimentSettings()
    if args.config:
        settings = apply_config_file(settings, args.config)
    if args.seed is not None:
        settings.seed = args.seed
    settings.out_dir = args.out
    settings.threads = args.threads
    if args.generations is not None:
        settings.generations = args.generations
    if args.population is not None:
        ga = settings.ga
        settings.ga = type(ga)(**{**{f: getattr(ga, f) for f in ga.__dataclass_fields__},
                                  "population_size": args.population})
    if args.grid is not None:
        settings.grid_strikes, settings.grid_maturities = args.grid
    if args.box is not None:
        settings.box = ParamBox.load(args.box)
    if args.spot is not None:
        settings.spot = args.spot
    if args.strict_quadrature:
        q = settings.quad
        settings.quad = QuadratureSpec(q.u_max, q.n_nodes, q.n_panels, strict=True)
    return settings


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        if args.command == "price":
            out = cmd_price(settings, params_path=args.params)
        elif args.command == "convergence":
            out = cmd_convergence(settings, trials=args.trials)
        elif args.command == "ttt":
            out = cmd_ttt(settings, trials=args.trials,
                          max_generations=args.max_generations)
        elif args.command == "overfit":
            out = cmd_overfit(settings, seeds=args.seeds,
                              budget_epochs=args.budget_epochs,
                              lhs_size=args.lhs_size,
                              history_generations=args.history_generations)
        elif args.command == "archstats":
            checkpoints = tuple(int(c) for c in args.checkpoints.split(","))
            out = cmd_archstats(settings, checkpoints=checkpoints)
        elif args.command == "calibrate-real":
            checkpoints = tuple(int(c) for c in args.checkpoints.split(","))
            out = cmd_calibrate_real(settings, chain_path=args.chain,
                                     spot=args.chain_spot, rates_path=args.rates,
                                     truth_path=args.truth, checkpoints=checkpoints,
                                     lhs_size=args.lhs_size)
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown command {args.command}")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for key, value in out.items():
        print(f"{key}: {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
