"""Run every experiment from the configs next to this script and print a summary table.

    python scripts/run_all.py [--out DIR] [--skip loss ...]
"""

import argparse
import sys
import time
from pathlib import Path

from fullmhd.experiments import RunConfig, run

HERE = Path(__file__).resolve().parent
CONFIGS = {
    "selfcheck": None,
    "smooth": HERE / "configs" / "smooth.yaml",
    "picard": HERE / "configs" / "picard.yaml",
    "loss": HERE / "configs" / "loss.yaml",
    "lemma": HERE / "configs" / "lemma.yaml",
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs", help="root output directory")
    parser.add_argument("--skip", nargs="*", default=[], choices=list(CONFIGS))
    args = parser.parse_args(argv)
    failed = []
    for name, path in CONFIGS.items():
        if name in args.skip:
            continue
        out = str(Path(args.out) / name)
        if path is None:
            cfg = RunConfig.for_experiment(name, out=out)
        else:
            cfg = RunConfig.from_file(path, out=out)
        start = time.perf_counter()
        res = run(cfg)
        status = "pass" if res.passed else "FAIL"
        print(f"{name:<10} {status}  {time.perf_counter() - start:6.1f}s  -> {out}")
        for check, ok in res.summary["checks"].items():
            if not ok:
                print(f"{'':<10} failed check: {check}")
        if not res.passed:
            failed.append(name)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
