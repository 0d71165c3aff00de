"""Benchmark problems, error norms and convergence studies.

Every problem runs under both discretizations on identical node sets, so the
number of degrees of freedom is the same for NIVED and MEM.
"""

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from nived.assembly import GlobalSystem, apply_dirichlet, make_discretization
from nived.errors import ConfigurationError
from nived.geometry import (
    LShape,
    PlateWithHole,
    QuarterAnnulus,
    Rectangle,
    build_partition,
    generate_structured_mesh,
    generate_unstructured_mesh,
)
from nived.materials import ElasticModuli, MaxwellModel
from nived.quadrature import triangle_points
from nived.solvers import (
    SolveConfig,
    count_rigid_modes,
    eigen_smallest,
    newmark_solve,
    solve_reduced,
    viscoelastic_solve,
)

# ------------------------------------------------------------------ problem data

# jitter seed of the convergence mesh families (see the README)
FAMILY_SEED = 3


@dataclass
class Dirichlet:
    """Prescribed components on the nodes of a tag (or a node selector)."""

    where: object
    components: tuple = (0, 1)
    value: object = None  # callable(points) -> (P, 2); None means zero

    def nodes(self, mesh):
        if callable(self.where):
            return np.asarray(self.where(mesh), dtype=np.int64)
        return mesh.tagged_nodes(self.where)


@dataclass
class Neumann:
    tag: str
    traction: object  # callable(points, normals) -> (P, 2)


@dataclass
class BenchmarkProblem:
    name: str
    domain: object
    moduli: ElasticModuli
    levels: list
    dirichlet: list = field(default_factory=list)
    neumann: list = field(default_factory=list)
    body: object = None
    exact_u: object = None
    exact_grad: object = None
    exact_stress: object = None
    reference_energy: float = None
    seed: int = None  # jitter seed for the mesh family; None keeps it regular

    def mesh(self, level, seed=None):
        seed = self.seed if seed is None else seed
        return generate_structured_mesh(self.domain, level, seed=seed)

    def constraints(self, mesh):
        dofs, vals = [], []
        for bc in self.dirichlet:
            nodes = bc.nodes(mesh)
            u = np.zeros((len(nodes), 2)) if bc.value is None else bc.value(mesh.nodes[nodes])
            for c in bc.components:
                dofs.append(2 * nodes + c)
                vals.append(u[:, c])
        if not dofs:
            return np.zeros(0, np.int64), np.zeros(0)
        return np.concatenate(dofs), np.concatenate(vals)


@dataclass
class ErrorReport:
    level: object
    dofs: int
    h: float
    l2: float = float("nan")
    h1: float = float("nan")
    energy: float = float("nan")
    seconds: float = 0.0

    def as_dict(self):
        return asdict(self)


@dataclass
class BenchmarkReport:
    name: str
    method: str
    reports: list
    rates: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def stress_traction(stress):
    """Traction sigma . n from a Voigt stress callback."""
    def traction(x, n):
        s = stress(x)
        return np.column_stack([s[:, 0] * n[:, 0] + s[:, 2] * n[:, 1],
                                s[:, 2] * n[:, 0] + s[:, 1] * n[:, 1]])
    return traction


# ------------------------------------------------------------------ measures

def error_norms(d, mesh, basis, exact_u, exact_grad, rule=3):
    """Relative L2 error and H1-seminorm error using a triangle rule.

    ``exact_grad(x)`` returns (P, 2, 2) with entries du_i/dx_j.
    """
    pts, w = triangle_points(mesh.nodes, mesh.triangles, rule)
    table = basis.evaluate(pts, gradients=True)
    dn = np.asarray(d, float).reshape(-1, 2)
    uh = table.interpolate(dn)
    gh = table.interpolate_gradient(dn)
    ue, ge = exact_u(pts), exact_grad(pts)
    l2 = math.sqrt(np.sum(w * np.sum((uh - ue) ** 2, axis=1)) / np.sum(w * np.sum(ue**2, axis=1)))
    h1 = math.sqrt(np.sum(w * np.sum((gh - ge) ** 2, axis=(1, 2)))
                   / np.sum(w * np.sum(ge**2, axis=(1, 2))))
    return l2, h1


def strain_energy(d, K):
    """U = 1/2 d^T K d."""
    d = np.asarray(d, float)
    return 0.5 * float(d @ (K @ d))


def convergence_rate(h, errors):
    """Least-squares slope of log(error) against log(h)."""
    h, errors = np.asarray(h, float), np.asarray(errors, float)
    if len(h) < 3:
        raise ConfigurationError("a convergence rate needs at least 3 levels")
    return float(np.polyfit(np.log(h), np.log(errors), 1)[0])


# ------------------------------------------------------------------ static driver

def solve_static(problem, mesh, method="nived", prior=None, rule=3):
    """Assemble and solve; returns ``(disc, d, K)``."""
    part = build_partition(mesh)
    disc = make_discretization(part, method, prior, rule)
    K = disc.stiffness(problem.moduli.d_matrix)
    f = np.zeros(disc.n_dofs)
    for nm in problem.neumann:
        f += disc.traction(nm.tag, nm.traction)
    if problem.body is not None:
        f += disc.body_force(problem.body)
    dofs, vals = problem.constraints(mesh)
    d = solve_reduced(apply_dirichlet(GlobalSystem(K, f), dofs, vals))
    return disc, d, K


def run_level(problem, mesh, method="nived", prior=None, rule=3, level=None):
    t0 = time.perf_counter()
    disc, d, K = solve_static(problem, mesh, method, prior, rule)
    rep = ErrorReport(level=level, dofs=disc.n_dofs, h=disc.partition.h,
                      energy=strain_energy(d, K))
    if problem.exact_u is not None:
        rep.l2, rep.h1 = error_norms(d, mesh, disc.basis, problem.exact_u, problem.exact_grad)
    rep.seconds = time.perf_counter() - t0
    return rep


def run_family(problem, method="nived", prior=None, rule=3, levels=None, seed=None):
    levels = problem.levels if levels is None else levels
    reports = [run_level(problem, problem.mesh(lv, seed), method, prior, rule, level=lv)
               for lv in levels]
    out = BenchmarkReport(problem.name, method if method == "nived" else f"mem{rule}", reports)
    if problem.exact_u is not None and len(reports) >= 3:
        h = [r.h for r in reports]
        out.rates = {"l2": convergence_rate(h, [r.l2 for r in reports]),
                     "h1": convergence_rate(h, [r.h1 for r in reports])}
    return out


# ------------------------------------------------------------------ problems

def patch_test_problem(E=3e7, nu=0.3, sigma=1.0):
    def u(x):
        return np.column_stack([nu * (1.0 - x[:, 0]) / E, x[:, 1] / E])

    def grad(x):
        g = np.zeros((len(x), 2, 2))
        g[:, 0, 0], g[:, 1, 1] = -nu / E, 1.0 / E
        return g

    def corner(mesh):
        return [int(np.argmin(np.hypot(mesh.nodes[:, 0] - 1.0, mesh.nodes[:, 1])))]

    zero = lambda x, n: np.zeros((len(x), 2))  # noqa: E731
    return BenchmarkProblem(
        name="patch", domain=Rectangle(0, 0, 1, 1),
        moduli=ElasticModuli(E, nu, "plane_stress"), levels=[(4, 4)],
        dirichlet=[Dirichlet("bottom", (1,), u), Dirichlet(corner, (0,), u)],
        neumann=[Neumann("top", lambda x, n: np.tile([0.0, sigma], (len(x), 1))),
                 Neumann("left", zero), Neumann("right", zero)],
        exact_u=u, exact_grad=grad)


def patch_mesh(kind, divisions=8, seed=7):
    dom = Rectangle(0, 0, 1, 1)
    if kind == "regular":
        return generate_structured_mesh(dom, divisions, pattern="uniform")
    if kind == "distorted":
        return generate_structured_mesh(dom, divisions, seed=seed, pattern="uniform")
    if kind == "unstructured":
        return generate_unstructured_mesh(dom, divisions, seed=seed)
    raise ConfigurationError(f"unknown patch mesh kind {kind!r}")


def run_patch_test(method="nived", mesh="regular", rule=3, prior=None, divisions=8, seed=7):
    prob = patch_test_problem()
    m = patch_mesh(mesh, divisions, seed) if isinstance(mesh, str) else mesh
    return run_level(prob, m, method, prior, rule, level=mesh if isinstance(mesh, str) else None)


def cantilever_problem(P=-1000.0, E=1e7, nu=0.3, L=8.0, D=4.0):
    Eb, nub = E / (1.0 - nu**2), nu / (1.0 - nu)
    I = D**3 / 12.0
    c = P / (6.0 * Eb * I)

    def u(x):
        x1, x2 = x[:, 0], x[:, 1]
        u1 = -c * x2 * ((6 * L - 3 * x1) * x1 + (2 + nub) * x2**2 - 1.5 * D**2 * (1 + nub))
        u2 = c * (3 * nub * x2**2 * (L - x1) + (3 * L - x1) * x1**2)
        return np.column_stack([u1, u2])

    def grad(x):
        x1, x2 = x[:, 0], x[:, 1]
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = -c * x2 * (6 * L - 6 * x1)
        g[:, 0, 1] = -c * ((6 * L - 3 * x1) * x1 + 3 * (2 + nub) * x2**2 - 1.5 * D**2 * (1 + nub))
        g[:, 1, 0] = c * (-3 * nub * x2**2 + 6 * L * x1 - 3 * x1**2)
        g[:, 1, 1] = c * 6 * nub * x2 * (L - x1)
        return g

    def stress(x):
        x1, x2 = x[:, 0], x[:, 1]
        return np.column_stack([-P * (L - x1) * x2 / I, np.zeros(len(x)),
                                P / (2 * I) * (D**2 / 4 - x2**2)])

    t = stress_traction(stress)
    return BenchmarkProblem(
        name="cantilever", domain=Rectangle(0, -D / 2, L, D / 2),
        moduli=ElasticModuli(E, nu, "plane_strain"),
        levels=[(16, 8), (32, 16), (64, 32), (128, 64)],
        dirichlet=[Dirichlet("left", (0, 1), u)],
        neumann=[Neumann("right", t), Neumann("top", t), Neumann("bottom", t)],
        exact_u=u, exact_grad=grad, exact_stress=stress, seed=FAMILY_SEED)


def plate_hole_problem(T=100.0, r0=1.0, a=5.0, E=1e3, nu=0.3, grading=4.0):
    G = E / (2 * (1 + nu))
    k = (3 - nu) / (1 + nu)
    s = T / (4 * G)

    def u(x):
        # polar closed form written in Cartesian terms so complex input works
        x1, x2 = x[:, 0], x[:, 1]
        r = np.sqrt(x1 * x1 + x2 * x2)
        c, sn = x1 / r, x2 / r
        c3, s3 = 4 * c**3 - 3 * c, 3 * sn - 4 * sn**3
        u1 = s * (0.5 * (k + 1) * r * c + r0**2 / r * ((k + 1) * c + c3) - r0**4 / r**3 * c3)
        u2 = s * (0.5 * (k - 3) * r * sn + r0**2 / r * ((1 - k) * sn + s3) - r0**4 / r**3 * s3)
        return np.column_stack([u1, u2])

    def stress(x):
        r, th = np.hypot(x[:, 0], x[:, 1]), np.arctan2(x[:, 1], x[:, 0])
        q2, q4 = r0**2 / r**2, 1.5 * r0**4 / r**4
        s11 = T * (1 - q2 * (1.5 * np.cos(2 * th) + np.cos(4 * th)) + q4 * np.cos(4 * th))
        s22 = -T * (q2 * (0.5 * np.cos(2 * th) - np.cos(4 * th)) + q4 * np.cos(4 * th))
        s12 = -T * (q2 * (0.5 * np.sin(2 * th) + np.sin(4 * th)) - q4 * np.sin(4 * th))
        return np.column_stack([s11, s22, s12])

    t = stress_traction(stress)
    return BenchmarkProblem(
        name="plate_hole", domain=PlateWithHole(a, r0, grading),
        moduli=ElasticModuli(E, nu, "plane_stress"),
        levels=[(4, 8), (8, 16), (16, 32), (32, 64)],
        dirichlet=[Dirichlet("left", (0,)), Dirichlet("bottom", (1,))],
        neumann=[Neumann("top", t), Neumann("right", t)],
        exact_u=u, exact_grad=complex_step_gradient(u), exact_stress=stress, seed=FAMILY_SEED)


def complex_step_gradient(u, h=1e-30):
    """Gradient (P, 2, 2) of a complex-safe vector field by the complex step."""
    def grad(x):
        g = np.empty((len(x), 2, 2))
        for j in range(2):
            z = np.asarray(x, dtype=complex)
            z[:, j] += 1j * h
            g[:, :, j] = u(z).imag / h
        return g
    return grad


def lshaped_problem(H=100.0, p=1.0, E=1.0, nu=0.3):
    return BenchmarkProblem(
        name="lshaped", domain=LShape(H), moduli=ElasticModuli(E, nu, "plane_stress"),
        levels=[4, 8, 16, 32],
        dirichlet=[Dirichlet("top", (1,)), Dirichlet("right", (0,))],
        neumann=[Neumann("bottom", lambda x, n: np.tile([0.0, -p], (len(x), 1)))],
        reference_energy=15566.46)


def manufactured_static_problem(E=1e5, nu=0.3, size=2.0):
    moduli = ElasticModuli(E, nu, "plane_stress")
    D = moduli.d_matrix

    def u(x):
        x1, x2 = x[:, 0], x[:, 1]
        return np.column_stack([np.sin(x1) * np.cos(x2), np.exp(x1 + x2)])

    def grad(x):
        x1, x2 = x[:, 0], x[:, 1]
        e = np.exp(x1 + x2)
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0], g[:, 0, 1] = np.cos(x1) * np.cos(x2), -np.sin(x1) * np.sin(x2)
        g[:, 1, 0], g[:, 1, 1] = e, e
        return g

    def stress(x):
        x1, x2 = x[:, 0], x[:, 1]
        e, cc = np.exp(x1 + x2), np.cos(x1) * np.cos(x2)
        return np.column_stack([D[0, 0] * cc + D[0, 1] * e, D[1, 0] * cc + D[1, 1] * e,
                                D[2, 2] * (e - np.sin(x1) * np.sin(x2))])

    def body(x):
        x1, x2 = x[:, 0], x[:, 1]
        e, sc, cs = np.exp(x1 + x2), np.sin(x1) * np.cos(x2), np.cos(x1) * np.sin(x2)
        return np.column_stack([sc * D[0, 0] - e * D[0, 1] - (e - sc) * D[2, 2],
                                cs * D[1, 0] - e * D[1, 1] - (e - cs) * D[2, 2]])

    return BenchmarkProblem(
        name="manufactured_static", domain=Rectangle(0, 0, size, size), moduli=moduli,
        levels=[(4, 4), (8, 8), (16, 16), (32, 32)],
        dirichlet=[Dirichlet(t, (0, 1), u) for t in ("bottom", "right", "top", "left")],
        body=body, exact_u=u, exact_grad=grad, exact_stress=stress, seed=FAMILY_SEED)


# ------------------------------------------------------------------ dynamics

@dataclass
class DynamicData:
    E: float = 1e5
    nu: float = 0.3
    rho: float = 800.0
    alpha: float = 0.001
    beta: float = 0.001
    size: float = 2.0

    def g(self, t):
        return self.alpha * (1.0 - math.exp(-0.5 * self.beta * t * t))

    def g_dot(self, t):
        return self.alpha * self.beta * t * math.exp(-0.5 * self.beta * t * t)

    def g_ddot(self, t):
        return self.alpha * self.beta * math.exp(-0.5 * self.beta * t * t) * (1.0 - self.beta * t * t)

    def shape(self, x):
        """Spatial factor U(x) of u = g(t) U(x)."""
        L2, nu = self.size**2, self.nu
        x1, x2 = x[:, 0], x[:, 1]
        return np.column_stack([x1 * (-(1 + nu) * L2 + nu * x2**2 + x1**2 / 3.0),
                                x2 * ((1 + nu) * L2 - nu * x1**2 - x2**2 / 3.0)])

    def shape_grad(self, x):
        L2, nu = self.size**2, self.nu
        x1, x2 = x[:, 0], x[:, 1]
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = -(1 + nu) * L2 + nu * x2**2 + x1**2
        g[:, 0, 1] = 2 * nu * x1 * x2
        g[:, 1, 0] = -2 * nu * x1 * x2
        g[:, 1, 1] = (1 + nu) * L2 - nu * x1**2 - x2**2
        return g

    def elastic_body(self, x):
        """Body force per unit g(t): b = g B1 + g_ddot rho U."""
        return np.column_stack([-2.0 * self.E * x[:, 0], 2.0 * self.E * x[:, 1]])

    def body(self, x, t):
        return self.g(t) * self.elastic_body(x) + self.g_ddot(t) * self.rho * self.shape(x)


def manufactured_dynamic_levels():
    return [(4, 4), (8, 8), (16, 16), (32, 32)]


def run_manufactured_dynamic(method="nived", levels=None, prior=None, rule=3, dt=0.01,
                             n_steps=100, data=None, seed=FAMILY_SEED):
    data = data or DynamicData()
    levels = manufactured_dynamic_levels() if levels is None else levels
    moduli = ElasticModuli(data.E, data.nu, "plane_stress")
    reports = []
    for lv in levels:
        t0 = time.perf_counter()
        mesh = generate_structured_mesh(Rectangle(0, 0, data.size, data.size), lv, seed=seed)
        disc = make_discretization(build_partition(mesh), method, prior, rule)
        K, M = disc.stiffness(moduli.d_matrix), disc.mass(data.rho)
        F1 = disc.body_force(data.elastic_body)
        F2 = disc.body_force(lambda x: data.rho * data.shape(x))
        bnodes = np.unique(mesh.boundary_edges)
        fixed = np.sort(np.concatenate([2 * bnodes, 2 * bnodes + 1]))
        U = data.shape(mesh.nodes).reshape(-1)[fixed]

        def force(t):
            return data.g(t) * F1 + data.g_ddot(t) * F2

        def prescribed(t):
            return data.g(t) * U, data.g_dot(t) * U, data.g_ddot(t) * U

        z = np.zeros(disc.n_dofs)
        _, (d, _, _) = newmark_solve(M, K, force, z, z, dt, n_steps, fixed, prescribed,
                                     keep=lambda x: None)
        T = n_steps * dt
        gT = data.g(T)
        l2, h1 = error_norms(d, mesh, disc.basis, lambda x: gT * data.shape(x),
                             lambda x: gT * data.shape_grad(x))
        reports.append(ErrorReport(level=lv, dofs=disc.n_dofs, h=disc.partition.h, l2=l2, h1=h1,
                                   energy=strain_energy(d, K),
                                   seconds=time.perf_counter() - t0))
    out = BenchmarkReport("manufactured_dynamic", method if method == "nived" else f"mem{rule}",
                          reports)
    if len(reports) >= 3:
        h = [r.h for r in reports]
        out.rates = {"l2": convergence_rate(h, [r.l2 for r in reports]),
                     "h1": convergence_rate(h, [r.h1 for r in reports])}
    return out


# ------------------------------------------------------------------ stability

@dataclass
class StabilityResult:
    eigenvalues: np.ndarray
    modes: np.ndarray
    lambda_max: float
    rigid_count: int
    mesh: object


def run_stability(method="nived", prior=None, rule=3, divisions=13, k=9):
    """Smallest eigenpairs of the unconstrained stiffness on the unit square."""
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), divisions)
    disc = make_discretization(build_partition(mesh), method, prior, rule)
    K = disc.stiffness(ElasticModuli(1.0, 0.3, "plane_stress").d_matrix)
    vals, vecs, scale = eigen_smallest(K, k)
    return StabilityResult(vals, vecs, scale, count_rigid_modes(vals, scale), mesh)


# ------------------------------------------------------------------ cylinder

CYLINDER_SETS = ((0.7, 0.3), (0.3, 0.7), (0.01, 0.99))

# reference NIVED radial displacements (u_A, u_B) at t = 20, keyed by dof count
CYLINDER_TABLE = {
    882: ((0.053012, 0.031904), (0.118830, 0.065142), (0.646690, 0.330050)),
    1922: ((0.053077, 0.031950), (0.118970, 0.065219), (0.647820, 0.330170)),
    3362: ((0.053101, 0.031966), (0.119020, 0.065246), (0.648160, 0.330210)),
    7442: ((0.053118, 0.031977), (0.119050, 0.065264), (0.648370, 0.330240)),
    26082: ((0.053131, 0.031983), (0.119070, 0.065272), (0.648440, 0.330210)),
}


@dataclass
class CylinderResult:
    mu: tuple
    times: np.ndarray
    u_a: np.ndarray
    u_b: np.ndarray
    iterations: list
    dofs: int


def cylinder_setup(divisions=60, r_in=2.0, r_out=4.0, p=10.0, prior=None):
    n = divisions if isinstance(divisions, (tuple, list)) else (divisions, divisions)
    mesh = generate_structured_mesh(QuarterAnnulus(r_in, r_out), tuple(n))
    disc = make_discretization(build_partition(mesh), "nived", prior)
    f = disc.traction("inner", lambda x, nrm: p * x / np.hypot(x[:, 0], x[:, 1])[:, None])
    left, bottom = mesh.tagged_nodes("left"), mesh.tagged_nodes("bottom")
    fixed = np.concatenate([2 * left, 2 * bottom + 1])
    x = mesh.nodes
    a = int(np.argmin(np.hypot(x[:, 0] - r_in, x[:, 1])))
    b = int(np.argmin(np.hypot(x[:, 0] - r_out, x[:, 1])))
    return disc, f, fixed, a, b


def run_cylinder(divisions=60, sets=CYLINDER_SETS, E=1000.0, nu=0.3, lambda1=1.0,
                 dt=1.0, n_steps=20, prior=None):
    disc, f, fixed, a, b = cylinder_setup(divisions, prior=prior)
    out = []
    for mu0, mu1 in sets:
        model = MaxwellModel(E, nu, mu0, mu1, lambda1)
        steps = viscoelastic_solve(disc, model, f, fixed, np.zeros(len(fixed)),
                                   SolveConfig(dt=dt, n_steps=n_steps))
        times = np.array([0.0] + [s.time for s in steps])
        ua = np.array([0.0] + [s.displacement[2 * a] for s in steps])
        ub = np.array([0.0] + [s.displacement[2 * b] for s in steps])
        out.append(CylinderResult((mu0, mu1), times, ua, ub, [s.iterations for s in steps],
                                  disc.n_dofs))
    return out


def lame_cylinder(r, p=10.0, r_in=2.0, r_out=4.0, shear=None, bulk=None):
    """Plane-strain radial displacement of a pressurized thick cylinder."""
    lam = bulk - 2.0 * shear / 3.0
    k = p * r_in**2 / (r_out**2 - r_in**2)
    A = k / (2.0 * (lam + shear))
    B = k * r_out**2 / (2.0 * shear)
    return A * r + B / r


BENCHMARKS = {
    "patch": patch_test_problem,
    "cantilever": cantilever_problem,
    "plate_hole": plate_hole_problem,
    "lshaped": lshaped_problem,
    "manufactured_static": manufactured_static_problem,
}


def get_problem(name):
    if name not in BENCHMARKS:
        raise ConfigurationError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}")
    return BENCHMARKS[name]()
