"""Radial displacements of the viscoelastic cylinder at t = 20 against the reference table."""

import argparse

from nived import benchmarks as bm


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--divisions", type=int, nargs="+", default=[20, 30, 40, 60])
    args = parser.parse_args()
    for n in args.divisions:
        results = bm.run_cylinder(divisions=n)
        ref = bm.CYLINDER_TABLE.get(results[0].dofs)
        for i, r in enumerate(results):
            line = (f"dofs={r.dofs} mu={r.mu} u_A={r.u_a[-1]:.6f} u_B={r.u_b[-1]:.6f} "
                    f"newton_max={max(r.iterations)}")
            if ref:
                ua, ub = ref[i]
                line += f" dA={100 * (r.u_a[-1] / ua - 1):+.3f}% dB={100 * (r.u_b[-1] / ub - 1):+.3f}%"
            print(line)


if __name__ == "__main__":
    main()
