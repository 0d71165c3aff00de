"""Static, eigen, Newmark and viscoelastic Newton-Raphson solvers."""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from nived.errors import ConfigurationError, SolverError
from nived.materials import (
    MaxwellState,
    instantaneous_tangent,
    instantaneous_update,
    visco_stress_update,
    visco_tangent,
)

log = logging.getLogger(__name__)

RIGID_THRESHOLD = 1e-10
_PIVOT_TOLERANCE = 1e-13


@dataclass
class SolveConfig:
    linear_tolerance: float = 1e-12
    max_newton_iters: int = 20
    newton_tolerance: float = 1e-10
    newton_absolute: float = 1e-14
    newmark_beta: float = 0.25
    newmark_gamma: float = 0.5
    dt: float = 1.0
    n_steps: int = 20

    def __post_init__(self):
        for name in ("linear_tolerance", "newton_tolerance", "newton_absolute", "dt"):
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"{name} must be positive")
        if self.n_steps < 0 or self.max_newton_iters < 1:
            raise ConfigurationError("step and iteration counts must be positive")


@dataclass
class TimeHistory:
    times: list = field(default_factory=list)
    displacements: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    accelerations: list = field(default_factory=list)
    iterations: list = field(default_factory=list)

    def append(self, t, d, v=None, a=None, iterations=None):
        if self.times and t <= self.times[-1]:
            raise SolverError("time history must be strictly increasing")
        self.times.append(float(t))
        self.displacements.append(d)
        self.velocities.append(v)
        self.accelerations.append(a)
        self.iterations.append(iterations)


# ------------------------------------------------------------------ linear

class Factorization:
    """Sparse LU of a (reduced) SPD matrix with a pivot sanity check."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] == 0:
            self.lu = None
            return
        try:
            self.lu = sla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"matrix is singular: {exc}") from exc
        piv = np.abs(self.lu.U.diagonal())
        worst = int(np.argmin(piv))
        if piv[worst] <= _PIVOT_TOLERANCE * piv.max():
            raise SolverError(
                f"matrix is singular to working precision (pivot {worst}: "
                f"{piv[worst]:.3e} vs max {piv.max():.3e})")
        self.A = A

    def solve(self, b):
        if self.lu is None:
            return np.zeros(0)
        return self.lu.solve(np.asarray(b, dtype=float))


def linear_solve(matrix, rhs, tolerance=1e-12):
    """Direct solve with a relative-residual check."""
    x = Factorization(matrix).solve(rhs)
    scale = np.linalg.norm(rhs)
    res = np.linalg.norm(matrix @ x - rhs) if len(x) else 0.0
    if scale > 0 and res > tolerance * scale:
        raise SolverError(f"relative residual {res / scale:.3e} exceeds {tolerance:.1e}")
    return x


def solve_reduced(reduced, tolerance=1e-12):
    """Solve a :class:`nived.assembly.ReducedSystem` and expand to all dofs."""
    return reduced.expand(linear_solve(reduced.matrix, reduced.rhs, tolerance))


# ------------------------------------------------------------------ eigen

def eigen_smallest(K, k, dense_limit=6000, check=True):
    """``k`` smallest eigenpairs of symmetric ``K``, ascending.

    Modes have unit norm and their largest-magnitude entry is positive.
    """
    n = K.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"need 1 <= k <= {n}")
    if n <= dense_limit:
        A = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
        vals, vecs = la.eigh(A, subset_by_index=[0, k - 1])
        scale = np.abs(la.eigvalsh(A, subset_by_index=[n - 1, n - 1])[0])
    else:
        A = sp.csr_matrix(K)
        scale = abs(sla.eigsh(A, k=1, which="LA", return_eigenvectors=False)[0])
        vals, vecs = sla.eigsh(A, k=k, sigma=-1e-8 * scale, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    big = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[big, np.arange(k)])
    if check:
        res = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
        if np.any(res > 1e-8 * max(scale, 1e-300)):
            raise SolverError(f"eigen residual {res.max():.3e} exceeds 1e-8 * |K|")
    return vals, vecs, scale


def count_rigid_modes(vals, scale, threshold=RIGID_THRESHOLD):
    return int(np.sum(vals < threshold * scale))


# ------------------------------------------------------------------ Newmark

class Newmark:
    """Implicit Newmark integration with prescribed motion on some dofs.

    Solves M a + K d = f on the free dofs; the constrained dofs follow the
    prescribed displacement/velocity/acceleration supplied at every step.
    K + M / (beta dt^2) is factorized once.
    """

    def __init__(self, M, K, dt, fixed=None, beta=0.25, gamma=0.5):
        if not dt > 0:
            raise ConfigurationError("time step must be positive")
        n = K.shape[0]
        self.M, self.K = sp.csr_matrix(M), sp.csr_matrix(K)
        self.dt, self.beta, self.gamma = dt, beta, gamma
        self.fixed = np.zeros(0, np.int64) if fixed is None else np.asarray(fixed, np.int64)
        self.free = np.setdiff1d(np.arange(n), self.fixed)
        f, c = self.free, self.fixed
        self.Mff, self.Mfc = self.M[f][:, f], self.M[f][:, c]
        self.Kff, self.Kfc = self.K[f][:, f], self.K[f][:, c]
        self.c0 = 1.0 / (beta * dt * dt)
        self.eff = Factorization(self.Kff + self.c0 * self.Mff)
        self.mass_lu = Factorization(self.Mff)

    def initial_acceleration(self, f0, d0, dc=None, ac=None):
        """Solve M a0 = f(0) - K d0 on the free dofs."""
        a = np.zeros_like(d0)
        rhs = f0[self.free] - self.K[self.free] @ d0
        if len(self.fixed):
            a[self.fixed] = 0.0 if ac is None else ac
            rhs = rhs - self.Mfc @ a[self.fixed]
        a[self.free] = self.mass_lu.solve(rhs)
        return a

    def step(self, d, v, a, f_next, dc=None, vc=None, ac=None):
        dt, beta, gamma = self.dt, self.beta, self.gamma
        d_pred = d + dt * v + dt * dt * (0.5 - beta) * a
        v_pred = v + dt * (1.0 - gamma) * a
        d_new, v_new, a_new = d_pred.copy(), v_pred.copy(), np.zeros_like(a)
        f, c = self.free, self.fixed
        rhs = f_next[f] + self.c0 * (self.Mff @ d_pred[f])
        if len(c):
            d_new[c] = dc
            a_new[c] = self.c0 * (dc - d_pred[c]) if ac is None else ac
            v_new[c] = v_pred[c] + gamma * dt * a_new[c] if vc is None else vc
            rhs -= self.Kfc @ d_new[c] + self.Mfc @ a_new[c]
        d_new[f] = self.eff.solve(rhs)
        a_new[f] = self.c0 * (d_new[f] - d_pred[f])
        v_new[f] = v_pred[f] + gamma * dt * a_new[f]
        return d_new, v_new, a_new


def newmark_step(M, K, f_next, state, dt, beta=0.25, gamma=0.5):
    """Single unconstrained Newmark step; ``state`` is (d, v, a)."""
    return Newmark(M, K, dt, None, beta, gamma).step(*state, f_next)


def newmark_solve(M, K, force, d0, v0, dt, n_steps, fixed=None, prescribed=None,
                  beta=0.25, gamma=0.5, keep=None):
    """Integrate from rest-or-given state.

    ``force(t)`` returns the global load vector; ``prescribed(t)`` returns
    (d, v, a) values on ``fixed``.  ``keep(d)`` selects what is stored per
    step (default: full vectors).
    """
    nm = Newmark(M, K, dt, fixed, beta, gamma)
    d, v = np.array(d0, float), np.array(v0, float)
    dc = vc = ac = None
    if fixed is not None and len(nm.fixed):
        dc, vc, ac = prescribed(0.0)
        d[nm.fixed], v[nm.fixed] = dc, vc
    a = nm.initial_acceleration(force(0.0), d, dc, ac)
    keep = keep or (lambda x: x.copy())
    hist = TimeHistory()
    hist.append(0.0, keep(d), keep(v), keep(a))
    for n in range(1, n_steps + 1):
        t = n * dt
        if len(nm.fixed):
            dc, vc, ac = prescribed(t)
        d, v, a = nm.step(d, v, a, force(t), dc, vc, ac)
        hist.append(t, keep(d), keep(v), keep(a))
    return hist, (d, v, a)


# ------------------------------------------------------------------ viscoelastic

@dataclass
class ViscoStep:
    time: float
    displacement: np.ndarray
    state: MaxwellState
    iterations: int
    residual: float


def viscoelastic_solve(disc, model, f_ext, fixed, values, config=None, instantaneous=False):
    """Newton-Raphson time stepping of a Generalized Maxwell solid.

    The body starts at rest (e = q = 0) and the load acts from the first
    step on; ``config.n_steps`` steps of size ``config.dt`` use the
    recursion-based stress update and its consistent tangent.  With
    ``instantaneous=True`` an extra step at t = 0 takes the sudden elastic
    response (q = e) as the starting state instead.
    """
    config = config or SolveConfig()
    fixed = np.asarray(fixed, np.int64)
    values = np.asarray(values, float)
    free = np.setdiff1d(np.arange(disc.n_dofs), fixed)
    state = MaxwellState.at_rest(disc.n_nodes)
    d = np.zeros(disc.n_dofs)
    d[fixed] = values
    steps = []
    cache = {}
    schedule = ([(0.0, None)] if instantaneous else []) + [
        ((n + 1) * config.dt, config.dt) for n in range(config.n_steps)]
    for t, dt in schedule:
        D = instantaneous_tangent(model) if dt is None else visco_tangent(model, dt)
        if dt not in cache:
            Kt, Ks = disc.stiffness_set(D, ("total", "stability"))
            cache[dt] = (Factorization(Kt[free][:, free]), Ks)
        lu, Ks = cache[dt]

        def residual(d):
            eps = disc.nodal_strain(d)
            if dt is None:
                sig, new = instantaneous_update(model, eps)
            else:
                sig, new = visco_stress_update(model, state, eps, dt)
            r = disc.internal_force(sig) + Ks @ d - f_ext
            return r[free], new

        scale = np.linalg.norm(f_ext[free])
        r, new = residual(d)
        norm = np.linalg.norm(r)
        its, growth, prev = 0, 0, norm
        while norm > config.newton_tolerance * scale and norm > config.newton_absolute:
            if its >= config.max_newton_iters:
                raise SolverError(f"Newton did not converge at t={t} (residual {norm:.3e})")
            d[free] -= lu.solve(r)
            its += 1
            r, new = residual(d)
            norm = np.linalg.norm(r)
            growth = growth + 1 if norm > prev else 0
            if growth >= 3:
                raise SolverError(f"Newton diverging at t={t}: residual grew 3 times ({norm:.3e})")
            prev = norm
        state = new
        log.debug("t=%g newton iterations=%d residual=%.3e", t, its, norm)
        steps.append(ViscoStep(t, d.copy(), state, its, norm / scale if scale else norm))
    return steps
