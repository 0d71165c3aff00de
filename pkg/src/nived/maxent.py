"""Linear maximum-entropy basis functions.

For an evaluation point x with contributors a = 1..m and shifted coordinates
c_a = x_a - x, the basis is

    phi_a = w_a exp(-lambda . c_a) / Z,   Z = sum_b w_b exp(-lambda . c_b),

where lambda minimizes the convex dual ln Z.  The minimizer enforces
sum phi_a c_a = 0, i.e. linear reproduction.  Points on a straight piece of
the contributors' convex hull are handled by restricting to the supporting
line (the basis there is the one-dimensional maxent basis of that face), and
points at a convex corner node get the Kronecker delta.

Evaluation is batched: many points are processed in one vectorized Newton
loop over padded contributor arrays.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from nived.errors import ConfigurationError, DegenerateSupportError

GAUSSIAN_CUTOFF = 1e-10
DUAL_TOLERANCE = 1e-12
MAX_NEWTON = 100
COLLINEAR_TOLERANCE = 1e-14
_GAP_TOLERANCE = 1e-9
_COINCIDENT = 1e-12


@dataclass(frozen=True)
class Prior:
    """Node-attached prior weight w_a.

    ``gaussian``: w = exp(-gamma |c|^2 / h_a^2), truncated below 1e-10.
    ``quartic``: w = 1 - 6q^2 + 8q^3 - 3q^4 with q = |c| / (gamma h_a), q < 1.
    """

    kind: str = "gaussian"
    gamma: float = 2.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "quartic"):
            raise ConfigurationError(f"unknown prior {self.kind!r}")
        if not self.gamma > 0.0:
            raise ConfigurationError("prior gamma must be positive")

    def radius(self, h):
        """Support radius for characteristic spacing ``h``."""
        h = np.asarray(h, dtype=float)
        if self.kind == "gaussian":
            return h * math.sqrt(-math.log(GAUSSIAN_CUTOFF) / self.gamma)
        return self.gamma * h

    def inside(self, dist2, h):
        """Mask of (squared) distances inside the support."""
        if self.kind == "gaussian":
            return self.gamma * dist2 / h**2 <= -math.log(GAUSSIAN_CUTOFF)
        return dist2 < (self.gamma * h) ** 2

    def log_weight(self, c, h):
        """ln w for shifted coordinates ``c`` (..., 2) and spacings ``h`` (...)."""
        r2 = np.einsum("...i,...i->...", c, c)
        if self.kind == "gaussian":
            return -self.gamma * r2 / h**2
        q = np.sqrt(r2) / (self.gamma * h)
        with np.errstate(divide="ignore"):
            return 3.0 * np.log1p(-q) + np.log1p(3.0 * q)

    def log_weight_gradient(self, c, h):
        """Gradient of ln w_a with respect to the evaluation point x."""
        if self.kind == "gaussian":
            return (2.0 * self.gamma / h**2)[..., None] * c
        q = np.linalg.norm(c, axis=-1) / (self.gamma * h)
        scale = 12.0 / ((self.gamma * h) ** 2 * (1.0 - q) * (1.0 + 3.0 * q))
        return scale[..., None] * c


@dataclass
class DualState:
    """Converged dual quantities at one point."""

    lam: np.ndarray
    partition_value: float
    gradient: np.ndarray
    hessian: np.ndarray
    iterations: int = 0


@dataclass
class BasisEvaluation:
    """Basis values (and optionally gradients) at one point."""

    point: np.ndarray
    contributors: np.ndarray
    values: np.ndarray
    gradients: np.ndarray = None
    dual: DualState = None


@dataclass
class BasisTable:
    """Padded basis data for many points.

    ``index[p, k]`` is the k-th contributor of point p (ascending, -1 for
    padding), with value ``phi[p, k]`` and gradient ``dphi[p, k]``.
    """

    points: np.ndarray
    index: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray = None

    def __len__(self):
        return len(self.points)

    def row(self, p):
        keep = self.index[p] >= 0
        return BasisEvaluation(
            point=self.points[p], contributors=self.index[p][keep], values=self.phi[p][keep],
            gradients=None if self.dphi is None else self.dphi[p][keep])

    def interpolate(self, d):
        """Field values sum_a phi_a d_a for nodal values ``d`` of shape (N, k)."""
        vals = np.where(self.index[..., None] >= 0, d[np.maximum(self.index, 0)], 0.0)
        return np.einsum("pk,pkj->pj", self.phi, vals)

    def interpolate_gradient(self, d):
        """Gradients sum_a d_a (x) grad phi_a, shape (P, k, 2)."""
        vals = np.where(self.index[..., None] >= 0, d[np.maximum(self.index, 0)], 0.0)
        return np.einsum("pkj,pkl->pjl", vals, self.dphi)


class MaxEntBasis:
    """Maxent approximant on a fixed node set."""

    def __init__(self, nodes, h_a, prior=None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.h_a = np.asarray(h_a, dtype=float)
        self.prior = prior or Prior()
        self.tree = cKDTree(self.nodes)
        self.radius = self.prior.radius(self.h_a)
        self.bins = self._radius_bins()

    @classmethod
    def from_partition(cls, partition, prior=None):
        return cls(partition.nodes, partition.h_a, prior)

    # ---------------------------------------------------------------- search

    def _radius_bins(self, ratio=1.5):
        """Nodes grouped by support radius so graded meshes search tightly."""
        order = np.argsort(self.radius, kind="stable")
        r = self.radius[order]
        bins, start = [], 0
        while start < len(r):
            stop = int(np.searchsorted(r, r[start] * ratio, side="right"))
            members = order[start:stop]
            bins.append((members, cKDTree(self.nodes[members]), float(r[stop - 1]) * (1.0 + 1e-9)))
            start = stop
        return bins

    def contributors(self, points):
        """Padded ascending contributor lists, shape (P, mmax), -1 padded."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ptree = cKDTree(points)
        i, j = [], []
        for members, tree, rmax in self.bins:
            pairs = ptree.sparse_distance_matrix(tree, rmax, output_type="ndarray")
            i.append(pairs["i"].astype(np.int64))
            j.append(members[pairs["j"].astype(np.int64)])
        i, j = np.concatenate(i), np.concatenate(j)
        c = self.nodes[j] - points[i]
        keep = self.prior.inside(np.einsum("ij,ij->i", c, c), self.h_a[j])
        # exact coincidence gives distance 0, which sparse matrices drop
        hit = self.tree.query(points, k=1)
        zero = hit[0] == 0.0
        i = np.concatenate([i[keep], np.nonzero(zero)[0]])
        j = np.concatenate([j[keep], hit[1][zero]])
        pairs = np.unique(np.column_stack([i, j]), axis=0)
        i, j = pairs[:, 0], pairs[:, 1]
        counts = np.bincount(i, minlength=len(points))
        width = int(counts.max()) if len(i) else 0
        index = np.full((len(points), width), -1, dtype=np.int64)
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        index[i, np.arange(len(i)) - start[i]] = j
        return index

    # ------------------------------------------------------------ evaluation

    def evaluate(self, points, gradients=False):
        """Evaluate the basis at ``points`` (P, 2); returns a :class:`BasisTable`.

        Duplicate points are evaluated once, so coincident points receive
        bitwise-identical values.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        uniq, inverse = np.unique(points, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        index = self.contributors(uniq)
        phi, dphi = self._evaluate_padded(uniq, index, gradients)
        return BasisTable(points=points, index=index[inverse], phi=phi[inverse],
                          dphi=None if dphi is None else dphi[inverse])

    def evaluate_point(self, x, gradients=False):
        return self.evaluate(np.asarray(x, dtype=float)[None, :], gradients).row(0)

    def _evaluate_padded(self, points, index, gradients):
        P, m = index.shape
        if m == 0 or np.any(index[:, 0] < 0):
            bad = int(np.argmax(index[:, 0] < 0)) if m else 0
            raise DegenerateSupportError("point has no contributors", point=points[bad])
        valid = index >= 0
        safe = np.maximum(index, 0)
        h = self.h_a[safe]
        c = self.nodes[safe] - points[:, None, :]
        c[~valid] = 0.0
        lnw = np.where(valid, self.prior.log_weight(c, h), -np.inf)
        dist = np.where(valid, np.linalg.norm(c, axis=-1), 0.0)
        scale = dist.max(axis=1)
        coincident = valid & (dist <= _COINCIDENT * h)

        kind, direction = _classify(c, valid, coincident)
        phi = np.zeros((P, m))
        lam = np.zeros((P, 2))

        full = kind == 0
        if np.any(full):
            cs = c[full] / scale[full, None, None]
            gram = np.einsum("pk,pki,pkj->pij", valid[full].astype(float), cs, cs)
            low = np.linalg.eigvalsh(gram)[:, 0]
            if np.any(low < COLLINEAR_TOLERANCE):
                bad = np.nonzero(full)[0][int(np.argmax(low < COLLINEAR_TOLERANCE))]
                raise DegenerateSupportError(
                    "contributors are collinear or fewer than three", point=points[bad])
            ph, lm = _newton(cs, lnw[full], points[full])
            phi[full] = ph
            lam[full] = lm / scale[full, None]

        line = kind == 1
        if np.any(line):
            d = direction[line]
            cl = c[line]
            t = np.einsum("pki,pi->pk", cl, d)
            off = np.abs(cl[..., 0] * d[:, None, 1] - cl[..., 1] * d[:, None, 0])
            on = valid[line] & ((off <= 1e-8 * dist[line]) | coincident[line])
            ph, _ = _newton((t / scale[line, None])[..., None], np.where(on, lnw[line], -np.inf),
                            points[line])
            phi[line] = ph

        corner = kind == 2
        if np.any(corner):
            rows = np.nonzero(corner)[0]
            cols = np.argmax(coincident[corner], axis=1)
            phi[rows, cols] = 1.0

        if not gradients:
            return phi, None
        if np.any(~full):
            bad = int(np.argmax(~full))
            raise DegenerateSupportError(
                "basis gradients are undefined on the boundary of the support hull",
                point=points[bad])
        g = np.where(valid[..., None], self.prior.log_weight_gradient(c, h), 0.0)
        dphi = _gradients(phi, c, g)
        return phi, dphi


def _classify(c, valid, coincident):
    """0 = interior, 1 = on a straight hull edge, 2 = convex corner node.

    Uses the largest angular gap between contributor directions.
    """
    P = c.shape[0]
    use = valid & ~coincident
    ang = np.where(use, np.arctan2(c[..., 1], c[..., 0]), np.inf)
    ang = np.sort(ang, axis=1)
    count = use.sum(axis=1)
    kind = np.zeros(P, dtype=int)
    direction = np.zeros((P, 2))
    for p in np.nonzero(count >= 1)[0]:
        a = ang[p, :count[p]]
        gaps = np.append(np.diff(a), 2.0 * math.pi - (a[-1] - a[0]))
        k = int(np.argmax(gaps))
        if gaps[k] < math.pi - _GAP_TOLERANCE:
            continue
        if gaps[k] > math.pi + _GAP_TOLERANCE:
            if not coincident[p].any():
                raise DegenerateSupportError("point lies outside the contributors' hull")
            kind[p] = 2
        else:
            kind[p] = 1
            direction[p] = (math.cos(a[k]), math.sin(a[k]))
    if np.any(count == 0):
        bad = count == 0
        if not np.all(coincident[bad].any(axis=1)):
            raise DegenerateSupportError("point has no contributors")
        kind[bad] = 2
    return kind, direction


def _dual(c, lnw, lam):
    """ln Z, phi, residual r = -sum phi c and Hessian J for each point."""
    f = lnw - np.einsum("pki,pi->pk", c, lam)
    fmax = f.max(axis=1)
    e = np.exp(f - fmax[:, None])
    z = e.sum(axis=1)
    phi = e / z[:, None]
    r = -np.einsum("pk,pki->pi", phi, c)
    J = np.einsum("pk,pki,pkj->pij", phi, c, c) - r[:, :, None] * r[:, None, :]
    return np.log(z) + fmax, phi, r, J


def _newton(c, lnw, points):
    """Damped Newton on ln Z for a batch; ``c`` is pre-scaled (|c| <= 1)."""
    P, _, dim = c.shape
    lam = np.zeros((P, dim))
    F, phi, r, J = _dual(c, lnw, lam)
    active = np.ones(P, dtype=bool)
    for it in range(MAX_NEWTON + 1):
        norm = np.linalg.norm(r, axis=1)
        active &= norm > DUAL_TOLERANCE
        if not active.any():
            return _polish(c, lnw, lam, F, phi, r, J)
        if it == MAX_NEWTON:
            break
        a = np.nonzero(active)[0]
        step = -np.linalg.solve(J[a], r[a][..., None])[..., 0]
        alpha = np.ones(len(a))
        pending = np.ones(len(a), dtype=bool)
        for _ in range(60):
            s = a[pending]
            trial = lam[s] + alpha[pending, None] * step[pending]
            Ft, pt, rt, Jt = _dual(c[s], lnw[s], trial)
            ok = (Ft < F[s]) | (np.linalg.norm(rt, axis=1) < norm[s])
            acc = s[ok]
            lam[acc], F[acc], phi[acc], r[acc], J[acc] = trial[ok], Ft[ok], pt[ok], rt[ok], Jt[ok]
            idx = np.nonzero(pending)[0]
            pending[idx[ok]] = False
            alpha[pending] *= 0.5
            if not pending.any():
                break
        if pending.any():
            stuck = a[pending]
            active[stuck] = False
            if np.any(np.linalg.norm(r[stuck], axis=1) > DUAL_TOLERANCE):
                break
    bad = int(np.argmax(np.linalg.norm(r, axis=1)))
    raise DegenerateSupportError(
        "maxent dual solve did not converge", point=points[bad],
        residual=float(np.linalg.norm(r[bad])), iterations=MAX_NEWTON)


def _polish(c, lnw, lam, F, phi, r, J):
    """One extra full Newton step, kept wherever it lowers the residual."""
    trial = lam - np.linalg.solve(J, r[..., None])[..., 0]
    Ft, pt, rt, _ = _dual(c, lnw, trial)
    ok = np.linalg.norm(rt, axis=1) < np.linalg.norm(r, axis=1)
    phi[ok], lam[ok] = pt[ok], trial[ok]
    return phi, lam


def _gradients(phi, c, g):
    """Implicit differentiation of the converged dual (physical units)."""
    gbar = np.einsum("pk,pki->pi", phi, g)
    cbar = np.einsum("pk,pki->pi", phi, c)
    dc = c - cbar[:, None, :]
    J = np.einsum("pk,pki,pkj->pij", phi, c, dc)
    A = np.einsum("pk,pki,pkj->pij", phi, c, g - gbar[:, None, :])
    dlam = np.linalg.solve(J, A - np.eye(2))
    return phi[..., None] * (g - gbar[:, None, :] - np.einsum("pki,pij->pkj", dc, dlam))


# ------------------------------------------------------------------ functional API

def find_contributors(x, partition, prior=None):
    """Sorted global indices of the nodes supporting point ``x``."""
    basis = MaxEntBasis.from_partition(partition, prior)
    row = basis.contributors(np.asarray(x, dtype=float)[None, :])[0]
    row = row[row >= 0]
    c = partition.nodes[row] - np.asarray(x, dtype=float)
    if len(row) < 3 or np.linalg.matrix_rank(c - c.mean(axis=0), tol=1e-12 * partition.h) < 2:
        raise DegenerateSupportError("fewer than three non-collinear contributors",
                                     point=np.asarray(x))
    return row


def evaluate_basis(x, partition, prior=None, gradients=False):
    """Basis at a single point as a :class:`BasisEvaluation`."""
    basis = MaxEntBasis.from_partition(partition, prior)
    return basis.evaluate_point(x, gradients=gradients)


def evaluate_basis_with_gradients(x, partition, prior=None):
    return evaluate_basis(x, partition, prior, gradients=True)


def solve_dual(x, nodes, h, prior=None):
    """Converged :class:`DualState` for an interior point and explicit nodes."""
    prior = prior or Prior()
    c = np.asarray(nodes, dtype=float) - np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), c.shape[:1])
    s = np.linalg.norm(c, axis=1).max()
    phi, lam = _newton((c / s)[None], prior.log_weight(c, h)[None], np.asarray(x)[None])
    F, phi, r, J = _dual((c / s)[None], prior.log_weight(c, h)[None], lam)
    return DualState(lam=lam[0] / s, partition_value=float(np.exp(F[0])),
                     gradient=r[0] * s, hessian=J[0] * s * s)
