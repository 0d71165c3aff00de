"""Cell operators, stiffness/mass/force assembly and Dirichlet elimination.

Degrees of freedom are interleaved: node a owns dofs 2a (x) and 2a + 1 (y).

NIVED cell operators (per nodal cell E with contributor union a = 1..m)::

    (H)_a = [[dx1, 0, dx2/2], [0, dx2, dx1/2]]     dx = x_a - x_E
    (G)_a = [[1, 0, dx2/2], [0, 1, -dx1/2]]
    (W)_a = [[q1, 0, q2], [0, q2, q1]]            q_i = (1/|E|) sum_edges phi_a(mid) n_i len
    (R)_a = [[phi_E, 0, q2], [0, phi_E, -q1]]
    P = H W^T + G R^T
    K^c = |E| W D W^T,   K^s = (I - P)^T S (I - P),   S = diag(diag(K^c))

P has rank at most 6, so K^s is formed as S - S U V^T - V U^T S + V (U^T S U) V^T
with U = [H G] and V = [W R], never materializing I - P.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from nived.errors import ConfigurationError, NivedError
from nived.maxent import MaxEntBasis, Prior
from nived.quadrature import EDGE_POINTS, gauss_legendre, triangle_points

CHUNK = 256
CACHE_LIMIT = 2e7  # cached scatter entries (8 bytes each) before falling back


def interleave(a):
    """(..., m, 2) nodal pairs -> (..., 2m) dof vector layout."""
    return a.reshape(*a.shape[:-2], -1)


def node_dofs(index):
    """Global dofs (..., 2m) of padded node indices (..., m); padding stays -1."""
    d = np.stack([2 * index, 2 * index + 1], axis=-1)
    d[index < 0] = -1
    return interleave(d)


# ----------------------------------------------------------------- cell level

@dataclass
class CellOperators:
    """Dense operators of one nodal cell on its contributor union."""

    contributors: np.ndarray
    H: np.ndarray
    G: np.ndarray
    W: np.ndarray
    R: np.ndarray
    phi_e: np.ndarray
    area: float

    @property
    def P(self):
        return self.H @ self.W.T + self.G @ self.R.T

    @property
    def N_e(self):
        n = np.zeros((2, 2 * len(self.contributors)))
        n[0, 0::2] = self.phi_e
        n[1, 1::2] = self.phi_e
        return n


@dataclass
class StiffnessParts:
    consistency: np.ndarray
    stability: np.ndarray

    @property
    def total(self):
        return self.consistency + self.stability


def _blocks(q, phi_e, dx, mask):
    """Batched W, R, H, G of shape (..., 2m, 3) from per-node arrays."""
    shape = q.shape[:-1]
    z = np.zeros(shape)
    q1, q2 = q[..., 0], q[..., 1]
    d1, d2 = dx[..., 0], dx[..., 1]
    one = mask.astype(float)

    def rows(r0, r1):
        return np.stack([np.stack(r0, -1), np.stack(r1, -1)], axis=-2).reshape(*shape[:-1], -1, 3)

    W = rows((q1, z, q2), (z, q2, q1))
    R = rows((phi_e, z, q2), (z, phi_e, -q1))
    H = rows((d1, z, 0.5 * d2), (z, d2, 0.5 * d1))
    G = rows((one, z, 0.5 * d2 * one), (z, one, -0.5 * d1 * one))
    return W, R, H, G


def compute_cell_operators(cell, contributors, phi_mid, phi_e, nodes):
    """Operators of one cell.

    ``phi_mid`` is (edges, m) with basis values at the edge midpoints on the
    union ``contributors`` and ``phi_e`` the values at the cell node.
    """
    contributors = np.asarray(contributors)
    if phi_mid.shape != (len(cell.lengths), len(contributors)) or len(phi_e) != len(contributors):
        raise NivedError("contributor union does not match the basis arrays")
    flux = cell.normals * cell.lengths[:, None]
    q = phi_mid.T @ flux / cell.area
    dx = nodes[contributors] - cell.node_coords
    W, R, H, G = _blocks(q, np.asarray(phi_e, float), dx, np.ones(len(contributors), bool))
    return CellOperators(contributors, H, G, W, R, np.asarray(phi_e, float), cell.area)


def cell_stiffness(ops, D):
    """Consistency and D-recipe stability parts of one cell."""
    Kc = ops.area * ops.W @ D @ ops.W.T
    Kc = 0.5 * (Kc + Kc.T)
    A = np.eye(len(Kc)) - ops.P
    Ks = A.T @ np.diag(np.diag(Kc)) @ A
    return StiffnessParts(Kc, 0.5 * (Ks + Ks.T))


def cell_mass(ops, rho):
    """rho |E| P^T N_E^T N_E P (no stability part)."""
    NP = ops.N_e @ ops.P
    return rho * ops.area * NP.T @ NP


# ----------------------------------------------------------------- assembly

def _scatter(n, dofs, blocks, out=None):
    """Sum padded dense blocks (C, k, k) with dofs (C, k) into a CSR matrix."""
    rows = np.broadcast_to(dofs[:, :, None], blocks.shape)
    cols = np.broadcast_to(dofs[:, None, :], blocks.shape)
    keep = (rows >= 0) & (cols >= 0) & (blocks != 0.0)
    if keep.size and (dofs.max() >= n):
        raise NivedError("dof index out of range during assembly")
    m = sp.coo_matrix((blocks[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    m.sum_duplicates()
    return m if out is None else out + m


def symmetrize(K):
    """Exactly symmetric copy; sparse duplicate summation order is not stable."""
    K = K.tocsr()
    return ((K + K.T) * 0.5).tocsr()


def assemble(n_dofs, dofs, blocks):
    """Deterministic scatter-add of local matrices (list or padded arrays)."""
    if isinstance(blocks, list):
        width = max(len(d) for d in dofs)
        D = np.full((len(dofs), width), -1, dtype=np.int64)
        B = np.zeros((len(dofs), width, width))
        for i, (d, b) in enumerate(zip(dofs, blocks)):
            D[i, :len(d)] = d
            B[i, :len(d), :len(d)] = b
        dofs, blocks = D, B
    return symmetrize(_scatter(n_dofs, np.asarray(dofs), np.asarray(blocks)))


def scatter_vector(n_dofs, dofs, values):
    out = np.zeros(n_dofs)
    keep = dofs >= 0
    np.add.at(out, dofs[keep], values[keep])
    return out

class BlockAssembler:
    """Cached scatter pattern for padded node-block matrices.

    Entity ``c`` (a cell or a Gauss point) couples the nodes ``index[c]``
    (-1 padded).  Its dense (2m, 2m) matrix is split into 2x2 node blocks
    and summed with ``bincount`` into a block-sparse matrix.  The summation
    order is fixed by entity order, so (a, b) and (b, a) receive identical
    operand sequences and symmetric inputs give exactly symmetric output.
    """

    def __init__(self, n_nodes, index, chunk=CHUNK, cache=None):
        self.n_nodes = n_nodes
        self.index = np.asarray(index, dtype=np.int64)
        if self.index.size and self.index.max() >= n_nodes:
            raise NivedError("node index out of range during assembly")
        self.slices = [slice(s, min(s + chunk, len(self.index)))
                       for s in range(0, len(self.index), chunk)]
        if cache is None:
            cache = self.index.shape[0] * self.index.shape[1] ** 2 < CACHE_LIMIT
        self.cache = cache
        if cache:
            keys = [self._keys(sl) for sl in self.slices]
            self.keys = np.unique(np.concatenate([k[v] for k, v in keys])) if keys else np.zeros(0, np.int64)
            self.valid = [v for _, v in keys]
            self.pos = [np.searchsorted(self.keys, k[v]) for k, v in keys]

    def _keys(self, sl):
        idx = self.index[sl]
        valid = (idx[:, :, None] >= 0) & (idx[:, None, :] >= 0)
        return idx[:, :, None] * self.n_nodes + idx[:, None, :], valid

    def _bsr(self, keys, data):
        rows = keys // self.n_nodes
        cols = (keys % self.n_nodes).astype(np.int64)
        indptr = np.searchsorted(rows, np.arange(self.n_nodes + 1))
        n = 2 * self.n_nodes
        return sp.bsr_matrix((data, cols, indptr), shape=(n, n)).tocsr()

    @staticmethod
    def _sum(nodal, pos, nb):
        data = np.zeros((nb, 2, 2))
        for i in range(2):
            for j in range(2):
                data[:, i, j] = np.bincount(pos, weights=nodal[:, i, j], minlength=nb)
        return data

    def assemble(self, blocks):
        """``blocks`` yields one (C, 2m, 2m) array per slice, in order."""
        acc = self.accumulator()
        for k, b in enumerate(blocks):
            acc.add(k, b)
        return acc.finish()

    def accumulator(self):
        return _Accumulator(self)


class _Accumulator:
    """Streaming sum of per-slice blocks; see :class:`BlockAssembler`.

    Without the cached pattern the scatter is rebuilt per slice, trading
    time for memory on large cell or Gauss-point sets.
    """

    def __init__(self, assembler):
        self.a = assembler
        self.data = np.zeros((len(assembler.keys), 2, 2)) if assembler.cache else None
        self.total = None

    def add(self, k, b):
        a = self.a
        C, m = b.shape[0], b.shape[1] // 2
        if a.cache:
            nodal = b.reshape(C, m, 2, m, 2).transpose(0, 1, 3, 2, 4)[a.valid[k]]
            self.data += a._sum(nodal, a.pos[k], len(a.keys))
            return
        keys, valid = a._keys(a.slices[k])
        uniq, pos = np.unique(keys[valid], return_inverse=True)
        nodal = b.reshape(C, m, 2, m, 2).transpose(0, 1, 3, 2, 4)[valid]
        part = a._bsr(uniq, a._sum(nodal, pos, len(uniq)))
        self.total = part if self.total is None else self.total + part

    def finish(self):
        a = self.a
        if a.cache:
            return a._bsr(a.keys, self.data)
        n = 2 * a.n_nodes
        return sp.csr_matrix((n, n)) if self.total is None else self.total


@dataclass
class GlobalSystem:
    stiffness: sp.csr_matrix
    force: np.ndarray
    mass: sp.csr_matrix = None
    dirichlet_dofs: np.ndarray = None
    dirichlet_values: np.ndarray = None

    @property
    def n_dofs(self):
        return self.stiffness.shape[0]


def merge_constraints(dofs, values):
    """Sort constraints, dropping exact duplicates and rejecting conflicts."""
    dofs = np.asarray(dofs, dtype=np.int64).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    order = np.lexsort((values, dofs))
    dofs, values = dofs[order], values[order]
    same = np.diff(dofs) == 0
    if np.any(same & (np.diff(values) != 0.0)):
        bad = dofs[1:][same & (np.diff(values) != 0.0)][0]
        raise ConfigurationError(f"conflicting Dirichlet values for dof {bad}")
    keep = np.concatenate([[True], ~same]) if len(dofs) else np.zeros(0, bool)
    return dofs[keep], values[keep]


@dataclass
class ReducedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    n_dofs: int

    def expand(self, x):
        d = np.zeros(self.n_dofs)
        d[self.free] = x
        d[self.fixed] = self.values
        return d


def apply_dirichlet(system, dofs=None, values=None):
    """Symmetric elimination of prescribed dofs."""
    if dofs is None:
        dofs, values = system.dirichlet_dofs, system.dirichlet_values
    if dofs is None:
        dofs, values = np.zeros(0, np.int64), np.zeros(0)
    fixed, vals = merge_constraints(dofs, values)
    n = system.n_dofs
    if len(fixed) and (fixed.min() < 0 or fixed.max() >= n):
        raise ConfigurationError("Dirichlet dof out of range")
    free = np.setdiff1d(np.arange(n), fixed)
    K = system.stiffness.tocsr()
    rhs = system.force[free] - K[free][:, fixed] @ vals
    return ReducedSystem(K[free][:, free].tocsr(), rhs, free, fixed, vals, n)


# ----------------------------------------------------------------- discretizations

def _pad(rows, width, fill):
    out = np.full((len(rows), width), fill, dtype=np.asarray(rows[0]).dtype if rows else float)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out


class NivedDiscretization:
    """Nodal integration over median-dual cells with D-recipe stabilization."""

    method = "nived"

    def __init__(self, partition, prior=None, neumann_rule="cell"):
        self.partition = partition
        self.mesh = partition.mesh
        self.nodes = partition.nodes
        self.n_nodes = len(self.nodes)
        self.n_dofs = 2 * self.n_nodes
        self.prior = prior or Prior()
        self.basis = MaxEntBasis.from_partition(partition, self.prior)
        self.neumann_rule = neumann_rule
        cells = partition.cells
        counts = np.array([len(c.lengths) for c in cells])
        mids = np.concatenate([c.midpoints for c in cells])
        centers = np.array([c.node_coords for c in cells])
        table = self.basis.evaluate(np.vstack([mids, centers]))
        mid_off = np.concatenate([[0], np.cumsum(counts)])
        n_mid = mid_off[-1]

        unions, phis_mid, phis_e = [], [], []
        for e in range(len(cells)):
            rows = np.arange(mid_off[e], mid_off[e + 1])
            idx = np.vstack([table.index[rows], table.index[n_mid + e][None, :]])
            union = np.unique(idx[idx >= 0])
            pos = np.searchsorted(union, np.maximum(idx, 0))
            vals = np.where(idx >= 0, np.vstack([table.phi[rows], table.phi[n_mid + e][None]]), 0.0)
            local = np.zeros((len(rows) + 1, len(union)))
            np.add.at(local, (np.repeat(np.arange(len(rows) + 1), idx.shape[1]), pos.ravel()),
                      vals.ravel())
            unions.append(union)
            phis_mid.append(local[:-1])
            phis_e.append(local[-1])
        width = max(len(u) for u in unions)
        kmax = counts.max()
        self.index = _pad(unions, width, -1).astype(np.int64)
        self.mask = self.index >= 0
        self.area = np.array([c.area for c in cells])
        self.phi_e = _pad(phis_e, width, 0.0)
        flux = np.zeros((len(cells), kmax, 2))
        phim = np.zeros((len(cells), kmax, width))
        for e, c in enumerate(cells):
            flux[e, :counts[e]] = c.normals * c.lengths[:, None]
            phim[e, :counts[e], :phis_mid[e].shape[1]] = phis_mid[e]
        self.q = np.einsum("ckm,cki->cmi", phim, flux) / self.area[:, None, None]
        dx = self.nodes[np.maximum(self.index, 0)] - centers[:, None, :]
        self.dx = np.where(self.mask[..., None], dx, 0.0)
        self.dofs = node_dofs(self.index)
        self.table = table
        self.assembler = BlockAssembler(self.n_nodes, self.index, CHUNK)

    # -- per-cell access (tests, diagnostics)

    def cell_operators(self, e):
        m = int(self.mask[e].sum())
        W, R, H, G = _blocks(self.q[e, :m], self.phi_e[e, :m], self.dx[e, :m],
                             np.ones(m, dtype=bool))
        return CellOperators(self.index[e, :m], H, G, W, R, self.phi_e[e, :m], self.area[e])

    def _chunks(self):
        for sl in self.assembler.slices:
            W, R, H, G = _blocks(self.q[sl], self.phi_e[sl], self.dx[sl], self.mask[sl])
            yield sl, W, R, H, G

    def _cell_blocks(self, sl, W, R, H, G, D):
        """Padded (K^c, K^s) blocks for a chunk; D is (3,3) or per-cell (C,3,3)."""
        area = self.area[sl]
        WD = W @ np.asarray(D, dtype=float)
        Kc = area[:, None, None] * (WD @ W.transpose(0, 2, 1))
        Kc = 0.5 * (Kc + Kc.transpose(0, 2, 1))
        s = np.diagonal(Kc, axis1=1, axis2=2)
        U = np.concatenate([H, G], axis=2)
        V = np.concatenate([W, R], axis=2)
        SU = s[..., None] * U
        Vt = V.transpose(0, 2, 1)
        SUV = SU @ Vt
        core = U.transpose(0, 2, 1) @ SU
        Ks = (V @ core) @ Vt - SUV - SUV.transpose(0, 2, 1)
        Ks = 0.5 * (Ks + Ks.transpose(0, 2, 1))
        idx = np.arange(Ks.shape[1])
        Ks[:, idx, idx] += s
        return Kc, Ks

    def stiffness(self, D, part="total"):
        """Global stiffness for moduli ``D``; ``part`` in {total, consistency, stability}."""
        return self.stiffness_set(D, (part,))[0]

    def stiffness_set(self, D, parts=("total", "stability")):
        """Several stiffness parts from one pass over the cells."""
        for p in parts:
            if p not in ("total", "consistency", "stability"):
                raise ConfigurationError(f"unknown stiffness part {p!r}")
        acc = {p: self.assembler.accumulator() for p in parts}
        for k, (sl, W, R, H, G) in enumerate(self._chunks()):
            Kc, Ks = self._cell_blocks(sl, W, R, H, G, D)
            got = {"consistency": Kc, "stability": Ks}
            if "total" in parts:
                got["total"] = Kc + Ks
            for p in parts:
                acc[p].add(k, got[p])
        return [symmetrize(acc[p].finish()) for p in parts]

    def stiffness_parts(self, D):
        return self.stiffness_set(D, ("consistency", "stability"))

    def mass(self, rho):
        def blocks():
            for sl, W, R, H, G in self._chunks():
                # N_E P with N_E built from phi_E
                U = np.concatenate([H, G], axis=2)
                V = np.concatenate([W, R], axis=2)
                NU = np.stack([np.einsum("ck,ckj->cj", self.phi_e[sl], U[:, 0::2]),
                               np.einsum("ck,ckj->cj", self.phi_e[sl], U[:, 1::2])], axis=1)
                NP = NU @ V.transpose(0, 2, 1)
                b = (rho * self.area[sl])[:, None, None] * (NP.transpose(0, 2, 1) @ NP)
                yield 0.5 * (b + b.transpose(0, 2, 1))
        return symmetrize(self.assembler.assemble(blocks()))

    def body_force(self, b):
        """f_b = |E| N_E^T b(x_E); ``b`` maps points (P, 2) to (P, 2)."""
        bx = np.asarray(b(self.nodes), dtype=float)
        vals = (self.area[:, None, None] * self.phi_e[..., None]) * bx[:, None, :]
        return scatter_vector(self.n_dofs, self.dofs, interleave(vals))

    def traction(self, tag, t):
        """Nodal forces of traction ``t(points, normals) -> (P, 2)`` on ``tag``."""
        segs = self.partition.segments(tag, self.neumann_rule)
        pts = np.concatenate([s.points for s in segs])
        wts = np.concatenate([s.weights for s in segs])
        nrm = np.concatenate([s.normals for s in segs])
        return _point_forces(self.basis, self.n_dofs, pts, wts, np.asarray(t(pts, nrm), float))

    def nodal_strain(self, d):
        """Voigt strain W_E^T d of every cell, shape (N, 3)."""
        dn = d.reshape(-1, 2)
        u = np.where(self.mask[..., None], dn[np.maximum(self.index, 0)], 0.0)
        q1, q2 = self.q[..., 0], self.q[..., 1]
        return np.stack([np.einsum("cm,cm->c", q1, u[..., 0]),
                         np.einsum("cm,cm->c", q2, u[..., 1]),
                         np.einsum("cm,cm->c", q2, u[..., 0]) + np.einsum("cm,cm->c", q1, u[..., 1])],
                        axis=1)

    def internal_force(self, stress):
        """sum_E |E| W_E stress_E for per-cell stresses (N, 3)."""
        s = self.area[:, None] * stress
        q1, q2 = self.q[..., 0], self.q[..., 1]
        fx = q1 * s[:, None, 0] + q2 * s[:, None, 2]
        fy = q2 * s[:, None, 1] + q1 * s[:, None, 2]
        return scatter_vector(self.n_dofs, self.dofs, interleave(np.stack([fx, fy], -1)))


def _point_forces(basis, n_dofs, pts, wts, vals):
    table = basis.evaluate(pts)
    contrib = (table.phi * wts[:, None])[..., None] * vals[:, None, :]
    return scatter_vector(n_dofs, node_dofs(table.index), interleave(contrib))


class MemDiscretization:
    """Gauss quadrature inside the background triangles."""

    method = "mem"

    def __init__(self, partition, prior=None, rule=3, chunk=512):
        self.partition = partition
        self.mesh = partition.mesh
        self.nodes = partition.nodes
        self.n_nodes = len(self.nodes)
        self.n_dofs = 2 * self.n_nodes
        self.prior = prior or Prior()
        self.rule = rule
        self.chunk = chunk
        self.basis = MaxEntBasis.from_partition(partition, self.prior)
        self.points, self.weights = triangle_points(self.nodes, self.mesh.triangles, rule)
        self.table = self.basis.evaluate(self.points, gradients=True)
        self.dofs = node_dofs(self.table.index)
        self.assembler = BlockAssembler(self.n_nodes, self.table.index, chunk)

    def _Bt(self, sl):
        """Transposed strain-displacement matrices, shape (C, 2m, 3)."""
        g = self.table.dphi[sl]
        z = np.zeros(g.shape[:2])
        r0 = np.stack([g[..., 0], z, g[..., 1]], -1)
        r1 = np.stack([z, g[..., 1], g[..., 0]], -1)
        return np.stack([r0, r1], axis=2).reshape(g.shape[0], -1, 3)

    def stiffness(self, D, part="total"):
        """sum_g w_g B^T D B over all Gauss points."""
        def blocks():
            for sl in self.assembler.slices:
                Bt = self._Bt(sl)
                b = self.weights[sl, None, None] * ((Bt @ D) @ Bt.transpose(0, 2, 1))
                yield 0.5 * (b + b.transpose(0, 2, 1))
        return symmetrize(self.assembler.assemble(blocks()))

    def mass(self, rho):
        def blocks():
            for sl in self.assembler.slices:
                phi = self.table.phi[sl]
                pp = (rho * self.weights[sl])[:, None, None] * phi[:, :, None] * phi[:, None, :]
                b = np.zeros((pp.shape[0], 2 * pp.shape[1], 2 * pp.shape[2]))
                b[:, 0::2, 0::2] = pp
                b[:, 1::2, 1::2] = pp
                yield b
        return symmetrize(self.assembler.assemble(blocks()))

    def body_force(self, b):
        vals = np.asarray(b(self.points), float)
        contrib = (self.table.phi * self.weights[:, None])[..., None] * vals[:, None, :]
        return scatter_vector(self.n_dofs, self.dofs, interleave(contrib))

    def traction(self, tag, t):
        mask = np.array([g == tag for g in self.mesh.boundary_tags])
        if not mask.any():
            raise ConfigurationError(f"unknown boundary tag {tag!r}")
        e = self.mesh.boundary_edges[mask]
        s, w = gauss_legendre(EDGE_POINTS[self.rule])
        a, b = self.nodes[e[:, 0]], self.nodes[e[:, 1]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        pts = (a[:, None, :] + s[None, :, None] * d[:, None, :]).reshape(-1, 2)
        wts = (length[:, None] * w[None, :]).reshape(-1)
        nrm = np.repeat(n, len(s), axis=0)
        return _point_forces(self.basis, self.n_dofs, pts, wts, np.asarray(t(pts, nrm), float))


def make_discretization(partition, method="nived", prior=None, rule=3):
    if method == "nived":
        return NivedDiscretization(partition, prior)
    if method == "mem":
        if rule is None:
            raise ConfigurationError("mem requires a Gauss rule")
        return MemDiscretization(partition, prior, rule)
    raise ConfigurationError(f"unknown method {method!r}")
