"""Smallest stiffness eigenvalues on the unit square for both priors and MEM."""

import argparse

import numpy as np

from nived import benchmarks as bm
from nived.maxent import Prior


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--divisions", type=int, default=13)
    parser.add_argument("-k", type=int, default=9)
    args = parser.parse_args()
    runs = [("nived", Prior("gaussian"), None), ("nived", Prior("quartic"), None),
            ("mem", Prior("gaussian"), 1), ("mem", Prior("gaussian"), 3)]
    for method, prior, rule in runs:
        res = bm.run_stability(method, prior, rule or 3, args.divisions, args.k)
        rel = np.array2string(res.eigenvalues / res.lambda_max, precision=2)
        print(f"{method} {prior.kind} rule={rule} rigid={res.rigid_count} relative={rel}")


if __name__ == "__main__":
    main()
