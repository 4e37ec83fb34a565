"""Command line entry point: ``python -m signorini_dpg <experiment> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .estimator import LevelError
from .experiments import ConfigError, ExperimentConfig, run_experiment
from .selftest import FAULTS, run_selftest
from .vi_solver import VIError

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
SUBCOMMANDS = {"smooth": "smooth", "lshape": "lshape", "rd": "reaction-diffusion"}


def _eps_list(text: str):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid epsilon list {text!r}")


def _add_run_options(p):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--variant", choices=["0", "n", "s"])
    p.add_argument("--refine", dest="refinement", choices=["uniform", "adaptive"])
    p.add_argument("--eps", dest="epsilons", type=_eps_list, action="extend",
                   help="epsilon values, comma or space separated")
    p.add_argument("--beta", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--max-elems", dest="max_elems", type=int)
    p.add_argument("--max-dofs", dest="max_dofs", type=int)
    p.add_argument("--solution", choices=["boundary-layer", "contact-layer"],
                   help="manufactured solution for the rd study")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signorini_dpg",
                                     description="DPG solver for Signorini problems")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        _add_run_options(sub.add_parser(name, help=f"{SUBCOMMANDS[name]} study"))
    st = sub.add_parser("selftest", help="oracle and invariant suites on tiny meshes")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--inject-fault", choices=FAULTS, action="append", default=[],
                    help=argparse.SUPPRESS)
    return parser


def config_from_args(args) -> ExperimentConfig:
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
    values["experiment"] = SUBCOMMANDS[args.command]
    for key in ("variant", "refinement", "epsilons", "beta", "theta", "max_elems",
                "max_dofs", "solution", "out", "seed"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    return ExperimentConfig.from_dict(values).validate()


def _selftest(args) -> int:
    report = run_selftest(args.seed, args.inject_fault)
    for name, ok, detail in report:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<22} {detail}")
    failed = sum(not ok for _, ok, _ in report)
    print(f"{len(report) - failed}/{len(report)} suites passed")
    return EXIT_OK if failed == 0 else EXIT_FAILURE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "selftest":
        return _selftest(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        parser.error(str(exc))
    try:
        summary = run_experiment(config)
    except (LevelError, VIError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    for name, case in summary["cases"].items():
        rates = ", ".join(f"{k}={v:.3f}" for k, v in sorted(case["fitted_rates"].items()))
        print(f"{name}: levels={case['levels']} N_T={case['final_N_T']} rates: {rates}")
    print(f"results written to {config.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
