"""Relative L2/H1 errors of the patch test for NIVED and MEM on three mesh kinds."""

import argparse

from nived import benchmarks as bm


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--divisions", type=int, default=8)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    kinds = ("regular", "distorted", "unstructured")
    print("method,rule," + ",".join(f"{k}_l2,{k}_h1" for k in kinds))
    for method, rule in [("mem", 1), ("mem", 3), ("mem", 6), ("mem", 12), ("nived", None)]:
        cells = []
        for kind in kinds:
            rep = bm.run_patch_test(method, kind, rule=rule or 3, divisions=args.divisions,
                                    seed=args.seed)
            cells += [f"{rep.l2:.2e}", f"{rep.h1:.2e}"]
        print(f"{method},{rule or 'edge'}," + ",".join(cells))


if __name__ == "__main__":
    main()
