"""Convergence rates of one benchmark family for several methods and jitter seeds."""

import argparse
import ast

from nived import benchmarks as bm


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("benchmark", choices=sorted(bm.BENCHMARKS) + ["manufactured_dynamic"])
    parser.add_argument("--levels", help="Python literal list, e.g. '[(8,8),(16,16),(32,32)]'")
    parser.add_argument("--methods", default="nived", help="comma list: nived,mem1,mem6")
    parser.add_argument("--seeds", default=str(bm.FAMILY_SEED), help="comma list; 'none' = regular")
    parser.add_argument("--grading", type=float, help="plate-with-hole radial grading")
    args = parser.parse_args()
    levels = ast.literal_eval(args.levels) if args.levels else None
    for token in args.seeds.split(","):
        seed = None if token == "none" else int(token)
        for m in args.methods.split(","):
            method, rule = ("nived", 3) if m == "nived" else ("mem", int(m[3:]))
            if args.benchmark == "manufactured_dynamic":
                rep = bm.run_manufactured_dynamic(method, levels, rule=rule, seed=seed)
            else:
                prob = (bm.plate_hole_problem(grading=args.grading)
                        if args.benchmark == "plate_hole" and args.grading else
                        bm.get_problem(args.benchmark))
                if seed is None:
                    prob.seed = None
                rep = bm.run_family(prob, method, rule=rule, levels=levels, seed=seed)
            for r in rep.reports:
                print(f"{m} seed={seed} level={r.level} dofs={r.dofs} h={r.h:.4g} "
                      f"l2={r.l2:.4e} h1={r.h1:.4e} U={r.energy:.6g} t={r.seconds:.1f}s")
            print(f"{m} seed={seed} rates={rep.rates}")


if __name__ == "__main__":
    main()
