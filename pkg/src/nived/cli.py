"""Command-line front end.

Subcommands: ``run``, ``convergence``, ``eigen``, ``cylinder`` and ``mesh-gen``.
Settings come from an optional JSON file (``--config``) and are overridden
by explicit flags.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nived import __version__
from nived import benchmarks as bm
from nived.errors import ConfigurationError, NivedError
from nived.geometry import (
    build_partition,
    domain_from_spec,
    generate_structured_mesh,
    generate_unstructured_mesh,
    read_mesh,
    write_mesh,
)
from nived.io import write_csv, write_json, write_vtk
from nived.materials import ElasticModuli
from nived.maxent import Prior

log = logging.getLogger("nived")

COMMANDS = ("run", "convergence", "eigen", "cylinder", "mesh-gen")
DYNAMIC = "manufactured_dynamic"
BENCHMARK_NAMES = sorted([*bm.BENCHMARKS, DYNAMIC])


@dataclass
class RunConfig:
    command: str = "run"
    method: str = "nived"
    gauss_rule: int = None
    prior: str = "gaussian"
    gamma: float = 2.0
    benchmark: str = None
    problem_file: str = None
    mesh_file: str = None
    divisions: list = None
    levels: list = None
    seed: int = None
    domain: dict = None
    unstructured: bool = False
    k: int = 9
    mu_sets: list = None
    dt: float = 1.0
    n_steps: int = 20
    linear_tolerance: float = 1e-12
    newton_tolerance: float = 1e-10
    output: str = "out"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("nived", "mem"):
            raise ConfigurationError(f"method must be 'nived' or 'mem', got {self.method!r}")
        if self.method == "mem" and self.gauss_rule is None:
            raise ConfigurationError("method 'mem' requires gauss_rule in {1, 3, 6, 12}")
        if self.method == "mem" and self.gauss_rule not in (1, 3, 6, 12):
            raise ConfigurationError(f"gauss_rule must be one of 1, 3, 6, 12, got {self.gauss_rule}")
        if self.method == "nived":
            self.gauss_rule = None
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")
        if self.prior not in ("gaussian", "quartic"):
            raise ConfigurationError(f"prior must be 'gaussian' or 'quartic', got {self.prior!r}")

    @property
    def prior_object(self):
        return Prior(self.prior, self.gamma)

    def as_dict(self):
        return {k: v for k, v in dataclasses.asdict(self).items() if k != "extra"}


def parse_divisions(text):
    """``"16x8"`` -> [16, 8]; ``"12"`` -> 12."""
    if text is None or isinstance(text, (int, list, tuple)):
        return text
    parts = [int(p) for p in str(text).lower().split("x")]
    return parts[0] if len(parts) == 1 else parts


def parse_levels(text):
    if text is None or isinstance(text, list):
        return text
    return [parse_divisions(p) for p in str(text).split(",") if p.strip()]


def parse_mu_sets(text):
    if text is None or isinstance(text, list):
        return text
    out = []
    for item in str(text).split(";"):
        mu0, mu1 = (float(v) for v in item.split(","))
        out.append([mu0, mu1])
    return out


# ------------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with configuration keys")
    common.add_argument("--method", choices=["nived", "mem"])
    common.add_argument("--gauss-rule", type=int, choices=[1, 3, 6, 12], dest="gauss_rule")
    common.add_argument("--prior", choices=["gaussian", "quartic"])
    common.add_argument("--gamma", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--output", "-o", help="output directory")
    common.add_argument("--mesh-file", dest="mesh_file", help="mesh file to use instead of a generator")
    common.add_argument("--divisions", help="mesh divisions, e.g. 16x8")
    common.add_argument("--linear-tolerance", type=float, dest="linear_tolerance")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="nived", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nived {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="solve one problem")
    p.add_argument("--benchmark", choices=BENCHMARK_NAMES)
    p.add_argument("--problem-file", dest="problem_file", help="JSON problem description")

    p = sub.add_parser("convergence", parents=[common], help="run a mesh family")
    p.add_argument("--benchmark", choices=BENCHMARK_NAMES)
    p.add_argument("--levels", help="comma separated divisions, e.g. 8x4,16x8,32x16")

    p = sub.add_parser("eigen", parents=[common], help="smallest stiffness eigenpairs")
    p.add_argument("-k", type=int, dest="k")

    p = sub.add_parser("cylinder", parents=[common], help="viscoelastic thick cylinder")
    p.add_argument("--mu-sets", dest="mu_sets", help="e.g. '0.7,0.3;0.3,0.7'")
    p.add_argument("--dt", type=float)
    p.add_argument("--n-steps", type=int, dest="n_steps")
    p.add_argument("--newton-tolerance", type=float, dest="newton_tolerance")

    p = sub.add_parser("mesh-gen", parents=[common], help="generate and write a mesh")
    p.add_argument("--domain", help='JSON domain spec, e.g. {"kind": "rectangle", "x1": 8}')
    p.add_argument("--unstructured", action="store_true", default=None)
    return parser


def resolve_config(args):
    """Merge the JSON file (if any) with explicit flags; flags win."""
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(json.load(fh))
    for key, val in vars(args).items():
        if key in ("config", "verbose") or val is None:
            continue
        values[key] = val
    values["command"] = args.command
    known = {f.name for f in dataclasses.fields(RunConfig)}
    extra = {k: v for k, v in values.items() if k not in known}
    if extra:
        raise ConfigurationError(f"unknown configuration keys: {sorted(extra)}")
    values["divisions"] = parse_divisions(values.get("divisions"))
    values["levels"] = parse_levels(values.get("levels"))
    values["mu_sets"] = parse_mu_sets(values.get("mu_sets"))
    if isinstance(values.get("domain"), str):
        values["domain"] = json.loads(values["domain"])
    return RunConfig(**values)


# ------------------------------------------------------------------ helpers

def limit_threads():
    """Honour NIVED_THREADS for the BLAS pools."""
    n = os.environ.get("NIVED_THREADS")
    if not n:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = n
        return None
    return threadpool_limits(int(n))


def _level(value):
    return tuple(value) if isinstance(value, list) else value


def problem_from_file(path):
    """Constant-data problem: domain, material and tagged boundary values."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    mat = spec.get("material", {})
    moduli = ElasticModuli(mat.get("youngs", 1.0), mat.get("poisson", 0.3),
                           mat.get("condition", "plane_stress"))

    def const(v):
        v = np.asarray(v, float)
        return lambda x, *_: np.tile(v, (len(x), 1))

    dirichlet = [bm.Dirichlet(d["tag"], tuple(d.get("components", (0, 1))),
                              const(d.get("value", [0.0, 0.0])))
                 for d in spec.get("dirichlet", [])]
    neumann = [bm.Neumann(n["tag"], const(n["traction"])) for n in spec.get("neumann", [])]
    body = const(spec["body"]) if "body" in spec else None
    return bm.BenchmarkProblem(
        name=spec.get("name", Path(path).stem),
        domain=domain_from_spec(spec.get("domain", {"kind": "rectangle"})),
        moduli=moduli, levels=[spec.get("divisions", 8)],
        dirichlet=dirichlet, neumann=neumann, body=body)


def select_problem(cfg):
    if cfg.problem_file:
        return problem_from_file(cfg.problem_file)
    if cfg.benchmark is None:
        raise ConfigurationError("a benchmark name or a problem file is required")
    return bm.get_problem(cfg.benchmark)


def nodal_fields(disc, d, moduli):
    """Nodal displacements, strains and stresses for output."""
    if disc.method == "nived":
        strain = disc.nodal_strain(d)
    else:
        # gradients are undefined at hull nodes, so average Gauss-point strains
        g = disc.table.interpolate_gradient(d.reshape(-1, 2))
        eps = np.column_stack([g[:, 0, 0], g[:, 1, 1], g[:, 0, 1] + g[:, 1, 0]])
        tris = disc.mesh.triangles
        w = disc.weights.reshape(len(tris), -1)
        area = w.sum(axis=1)
        tri_eps = np.einsum("tg,tgk->tk", w, eps.reshape(len(tris), -1, 3)) / area[:, None]
        strain = np.zeros((disc.n_nodes, 3))
        weight = np.zeros(disc.n_nodes)
        for k in range(3):
            np.add.at(strain, tris[:, k], area[:, None] * tri_eps)
            np.add.at(weight, tris[:, k], area)
        strain /= weight[:, None]
    stress = strain @ moduli.d_matrix.T
    return {"displacement": d.reshape(-1, 2), "strain": strain, "stress": stress}


# ------------------------------------------------------------------ commands

def cmd_run(cfg, out):
    if cfg.benchmark == DYNAMIC:
        level = _level(cfg.divisions or bm.manufactured_dynamic_levels()[1])
        rep = bm.run_manufactured_dynamic(cfg.method, [level], cfg.prior_object,
                                          cfg.gauss_rule or 3)
        write_json(out / "summary.json", {"reports": [r.as_dict() for r in rep.reports]},
                   cfg.as_dict())
        return 0
    problem = select_problem(cfg)
    if cfg.mesh_file:
        mesh = read_mesh(cfg.mesh_file)
    else:
        mesh = problem.mesh(_level(cfg.divisions or problem.levels[min(1, len(problem.levels) - 1)]),
                            seed=cfg.seed)
    t0 = time.perf_counter()
    disc, d, K = bm.solve_static(problem, mesh, cfg.method, cfg.prior_object, cfg.gauss_rule or 3)
    summary = {"dofs": disc.n_dofs, "h": disc.partition.h,
               "strain_energy": bm.strain_energy(d, K)}
    if problem.exact_u is not None:
        summary["l2"], summary["h1"] = bm.error_norms(d, mesh, disc.basis, problem.exact_u,
                                                      problem.exact_grad)
    if problem.reference_energy is not None:
        summary["reference_energy"] = problem.reference_energy
    summary["seconds"] = time.perf_counter() - t0
    write_json(out / "summary.json", summary, cfg.as_dict())
    write_vtk(out / "fields.vtk", mesh, nodal_fields(disc, d, problem.moduli), cfg.as_dict())
    print(json.dumps({k: v for k, v in summary.items()}, default=float))
    return 0


def cmd_convergence(cfg, out):
    levels = [_level(v) for v in cfg.levels] if cfg.levels else None
    if cfg.benchmark == DYNAMIC:
        report = bm.run_manufactured_dynamic(cfg.method, levels, cfg.prior_object,
                                             cfg.gauss_rule or 3)
    else:
        problem = select_problem(cfg)
        report = bm.run_family(problem, cfg.method, cfg.prior_object, cfg.gauss_rule or 3,
                               levels, seed=cfg.seed)
    cols = ["level", "h", "dofs", "l2", "h1", "energy", "seconds"]
    rows = [[r.level, r.h, r.dofs, r.l2, r.h1, r.energy, r.seconds] for r in report.reports]
    if report.rates:
        rows.append(["rate", "", "", report.rates["l2"], report.rates["h1"], "", ""])
    write_csv(out / "rates.csv", cols, rows, cfg.as_dict())
    print(json.dumps({"rates": report.rates}))
    return 0


def cmd_eigen(cfg, out):
    divisions = cfg.divisions or 13
    res = bm.run_stability(cfg.method, cfg.prior_object, cfg.gauss_rule or 3,
                           divisions=divisions, k=cfg.k)
    rows = [[i + 1, v, v / res.lambda_max] for i, v in enumerate(res.eigenvalues)]
    write_csv(out / "spectrum.csv", ["index", "eigenvalue", "relative"], rows, cfg.as_dict())
    for i in range(res.modes.shape[1]):
        write_vtk(out / f"mode_{i + 1:02d}.vtk", res.mesh,
                  {"mode": res.modes[:, i].reshape(-1, 2)}, cfg.as_dict(), title=f"mode {i + 1}")
    payload = {"rigid_body_modes": res.rigid_count, "lambda_max": res.lambda_max,
               "threshold": 1e-10, "n_nodes": res.mesh.n_nodes}
    write_json(out / "eigen.json", payload, cfg.as_dict())
    print(json.dumps(payload))
    return 0


def cmd_cylinder(cfg, out):
    sets = [tuple(s) for s in cfg.mu_sets] if cfg.mu_sets else bm.CYLINDER_SETS
    divisions = cfg.divisions or 60
    results = bm.run_cylinder(divisions, sets, dt=cfg.dt, n_steps=cfg.n_steps,
                              prior=cfg.prior_object)
    rows = []
    for r in results:
        its = [0] + list(r.iterations)
        rows += [[r.mu[0], r.mu[1], t, a, b, n] for t, a, b, n in zip(r.times, r.u_a, r.u_b, its)]
    write_csv(out / "history.csv", ["mu0", "mu1", "t", "u_A", "u_B", "newton_iterations"],
              rows, cfg.as_dict())
    print(json.dumps({"dofs": results[0].dofs,
                      "final": [[r.mu, r.u_a[-1], r.u_b[-1]] for r in results]}))
    return 0


def cmd_mesh_gen(cfg, out):
    domain = domain_from_spec(cfg.domain or {"kind": "rectangle"})
    divisions = cfg.divisions or 8
    if cfg.unstructured:
        mesh = generate_unstructured_mesh(domain, divisions, seed=cfg.seed or 0)
    else:
        mesh = generate_structured_mesh(domain, _level(divisions), seed=cfg.seed)
    build_partition(mesh)
    path = out / "mesh.txt"
    write_mesh(mesh, path)
    print(json.dumps({"nodes": mesh.n_nodes, "triangles": len(mesh.triangles), "path": str(path)}))
    return 0


HANDLERS = {"run": cmd_run, "convergence": cmd_convergence, "eigen": cmd_eigen,
            "cylinder": cmd_cylinder, "mesh-gen": cmd_mesh_gen}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.benchmark is not None and cfg.benchmark not in BENCHMARK_NAMES:
            parser.print_usage(sys.stderr)
            print(f"nived: error: unknown benchmark {cfg.benchmark!r}", file=sys.stderr)
            return 2
    except (ConfigurationError, ValueError, OSError) as exc:
        parser.print_usage(sys.stderr)
        print(f"nived: error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    limiter = limit_threads()
    try:
        return HANDLERS[cfg.command](cfg, out)
    except NivedError as exc:
        print(f"nived: error: {exc}", file=sys.stderr)
        return 1
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
