"""Command-line entry point: ``fullmhd <subcommand> [--config FILE] [overrides]``.

Exit status is 0 when every check of the experiment passes, 1 when one fails
and 2 for invalid configurations.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import solver as so
from .experiments import FAULTS, RunConfig, run

SUBCOMMANDS = {
    "run": "local_existence",
    "picard": "picard_contraction",
    "loss": "loss_of_smoothness",
    "lemma": "lemma_check",
    "selfcheck": "selfcheck",
}

# flag -> RunConfig field
_OVERRIDES = {
    "out": "out",
    "n": "N",
    "nu": "nu",
    "sigma": "sigma",
    "dt": "dt",
    "t_final": "T",
    "delta": "delta",
    "seed": "seed",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fullmhd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "integrate to T and write per-step diagnostics",
        "picard": "successive approximations on the admissible interval",
        "loss": "decay exponent of B driven by a rough electric field",
        "lemma": "best constant of the profile convolution bound",
        "selfcheck": "invariant suite with a pass/fail table",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML file of RunConfig keys")
        p.add_argument("--out", help="output directory")
        p.add_argument("--n", type=int, help="lattice cutoff N")
        p.add_argument("--nu", type=float, help="viscosity")
        p.add_argument("--sigma", type=float, help="conductivity")
        p.add_argument("--dt", type=float, help="time step")
        p.add_argument("--t-final", type=float, help="final time T")
        p.add_argument("--delta", type=float, help="roughness parameter in (0, 1]")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--plots", action="store_true", default=None, help="also write SVG plots")
        if name == "run":
            p.add_argument("--refine", action="store_true", default=None, help="add a dt, dt/2, dt/4 order study")
        if name == "selfcheck":
            p.add_argument("--fault", choices=FAULTS, help="inject a deliberate fault")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    experiment = SUBCOMMANDS[args.command]
    overrides = {field: getattr(args, flag) for flag, field in _OVERRIDES.items() if getattr(args, flag) is not None}
    for flag in ("plots", "refine", "fault"):
        if getattr(args, flag, None) is not None:
            overrides[flag] = getattr(args, flag)
    if args.config:
        return RunConfig.from_file(args.config, experiment=experiment, **overrides)
    return RunConfig.for_experiment(experiment, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        result = run(config)
    except (ValueError, so.BlowUpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    s = result.summary
    print(json.dumps({"experiment": s["experiment"], "checks": s["checks"], "passed": s["passed"]}, indent=2))
    print(f"outputs in {config.out_dir}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
