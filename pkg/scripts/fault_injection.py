"""Show that the self-check catches a sign error in the phi2 multiplier."""

import sys

from fullmhd.experiments import RunConfig, run


def main() -> int:
    clean = run(RunConfig.for_experiment("selfcheck", out="runs/selfcheck_clean"))
    faulty = run(RunConfig.for_experiment("selfcheck", fault="phi2_sign", out="runs/selfcheck_fault"))
    caught = [k for k, ok in faulty.summary["checks"].items() if not ok]
    print(f"clean build passes: {clean.passed}")
    print(f"checks failing under the fault: {', '.join(caught) or 'none'}")
    return 0 if clean.passed and "order_ampere" in caught else 1


if __name__ == "__main__":
    sys.exit(main())
