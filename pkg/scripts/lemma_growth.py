"""Tabulate the convolution-bound constant against n_max for each (s, s') pair."""

import argparse

from fullmhd import diagnostics as dg


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--s", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    parser.add_argument("--n-max", type=int, nargs="+", default=[5, 10, 15, 20])
    parser.add_argument("--C1", type=float, default=1.0)
    parser.add_argument("--C2", type=float, default=1.0)
    args = parser.parse_args(argv)
    print("s     s'    " + "".join(f"n_max={n:<6}" for n in args.n_max))
    for s in args.s:
        for s2 in args.s:
            vals = [dg.lemma_check(s, s2, args.C1, args.C2, n)[0] for n in args.n_max]
            print(f"{s:<5} {s2:<5} " + "".join(f"{v:<12.4f}" for v in vals))


if __name__ == "__main__":
    main()
