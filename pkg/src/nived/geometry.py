"""Background triangulations, median-dual nodal cells and Neumann segments.

Every mesh node owns one polygonal cell built by joining the centroids of
its incident triangles with the midpoints of its incident edges.  The cells
tile the domain, so their areas sum to the mesh area, and interior cell
edges are shared (with opposite normals) by exactly two cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from nived.errors import ConfigurationError, MeshError


@dataclass
class BackgroundMesh:
    """Counterclockwise triangulation with tagged boundary edges.

    ``boundary_edges[k]`` is oriented so that the domain lies to its left and
    carries the tag ``boundary_tags[k]``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: list

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = [str(t) for t in self.boundary_tags]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def tags(self):
        return sorted(set(self.boundary_tags))

    def signed_areas(self):
        p = self.nodes[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def area(self):
        return float(self.signed_areas().sum())

    def edges(self):
        """Unique undirected edges as a sorted (E, 2) array."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def tagged_nodes(self, tag):
        mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
        if not mask.any():
            raise ConfigurationError(f"unknown boundary tag {tag!r}; have {self.tags}")
        return np.unique(self.boundary_edges[mask])

    def validate(self):
        """Raise MeshError unless the mesh satisfies the structural invariants."""
        n = self.n_nodes
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise MeshError("triangle node index out of range")
        if self.boundary_edges.size and (self.boundary_edges.min() < 0
                                         or self.boundary_edges.max() >= n):
            raise MeshError("boundary edge node index out of range")
        areas = self.signed_areas()
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise MeshError(f"triangle {bad} has non-positive signed area {areas[bad]:.3e}")
        count = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                count[key] = count.get(key, 0) + 1
        if any(c > 2 for c in count.values()):
            raise MeshError("an edge is shared by more than two triangles")
        free = {k for k, c in count.items() if c == 1}
        listed = {(min(a, b), max(a, b)) for a, b in self.boundary_edges}
        if free != listed:
            raise MeshError("boundary edges do not match the free edges of the triangulation")
        # closed loops: every boundary node has equal in/out degree
        deg = np.zeros(n, dtype=int)
        np.add.at(deg, self.boundary_edges[:, 0], 1)
        np.add.at(deg, self.boundary_edges[:, 1], -1)
        if np.any(deg != 0):
            raise MeshError("boundary edges do not form closed loops")


# --------------------------------------------------------------------------
# plain-text mesh format

def write_mesh(mesh, path):
    path = Path(path)
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)]
    path.write_text("\n".join(lines) + "\n")


def read_mesh(path):
    """Parse the whitespace-delimited mesh format (``#`` starts a comment)."""
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    it = iter(rows)

    def header(name):
        try:
            row = next(it)
        except StopIteration:
            raise ConfigurationError(f"mesh file ended before '{name}' section") from None
        if row[0] != name or len(row) != 2:
            raise ConfigurationError(f"expected '{name} <count>', got {' '.join(row)!r}")
        return int(row[1])

    try:
        nodes = [[float(v) for v in next(it)[:2]] for _ in range(header("nodes"))]
        tris = [[int(v) for v in next(it)[:3]] for _ in range(header("triangles"))]
        edges, tags = [], []
        for _ in range(header("boundary")):
            row = next(it)
            edges.append([int(row[0]), int(row[1])])
            tags.append(row[2] if len(row) > 2 else "boundary")
    except (StopIteration, ValueError, IndexError) as exc:
        raise ConfigurationError(f"malformed mesh file {path}: {exc}") from None
    mesh = BackgroundMesh(np.array(nodes), np.array(tris), np.array(edges), tags)
    mesh.validate()
    return mesh


# --------------------------------------------------------------------------
# domains

@dataclass(frozen=True)
class Rectangle:
    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0
    kind = "rectangle"

    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def tag(self, p):
        x, y = p
        tol = 1e-9 * max(self.x1 - self.x0, self.y1 - self.y0)
        if abs(y - self.y0) < tol:
            return "bottom"
        if abs(x - self.x1) < tol:
            return "right"
        if abs(y - self.y1) < tol:
            return "top"
        if abs(x - self.x0) < tol:
            return "left"
        raise MeshError(f"point {p} is not on the rectangle boundary")


@dataclass(frozen=True)
class QuarterAnnulus:
    r_in: float = 1.0
    r_out: float = 2.0
    kind = "quarter-annulus"

    def area(self):
        return math.pi * (self.r_out ** 2 - self.r_in ** 2) / 4.0


@dataclass(frozen=True)
class LShape:
    """Square ``[0, size]^2`` with the upper-right quarter ``(size/2, size]^2`` removed."""

    size: float = 1.0
    kind = "l-shape"

    def area(self):
        return 0.75 * self.size ** 2


@dataclass(frozen=True)
class PlateWithHole:
    """Square ``[0, a]^2`` minus the quarter disc of radius ``r0`` at the origin."""

    a: float = 5.0
    r0: float = 1.0
    grading: float = 1.0  # ratio of outermost to innermost radial spacing
    kind = "plate-hole"

    def area(self):
        return self.a ** 2 - math.pi * self.r0 ** 2 / 4.0


def domain_from_spec(spec):
    """Build a domain from a mapping such as ``{"kind": "rectangle", "x1": 8}``."""
    spec = dict(spec)
    kind = spec.pop("kind", "rectangle")
    classes = {c.kind: c for c in (Rectangle, QuarterAnnulus, LShape, PlateWithHole)}
    if kind not in classes:
        raise ConfigurationError(f"unknown domain kind {kind!r}; choose from {sorted(classes)}")
    return classes[kind](**spec)


# --------------------------------------------------------------------------
# structured generators

def _grid_triangles(nx, ny, index, pattern, keep=None):
    """Split each grid quad (i, j) into two CCW triangles."""
    tris = []
    for j in range(ny):
        for i in range(nx):
            if keep is not None and not keep(i, j):
                continue
            a, b = index[j, i], index[j, i + 1]
            c, d = index[j + 1, i + 1], index[j + 1, i]
            flip = pattern == "alternate" and (i + j) % 2 == 1
            if flip:
                tris += [(a, b, d), (b, c, d)]
            else:
                tris += [(a, b, c), (a, c, d)]
    return tris


def _boundary_from_triangles(tris):
    """Directed free edges (domain on the left) of a CCW triangle list."""
    seen = {}
    for t in tris:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            if key in seen:
                del seen[key]
            else:
                seen[key] = (a, b)
    return sorted(seen.values())


def _compact(nodes, tris, bedges, tags):
    used = np.unique(np.asarray(tris).ravel())
    remap = -np.ones(len(nodes), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return BackgroundMesh(np.asarray(nodes)[used], remap[np.asarray(tris)],
                          remap[np.asarray(bedges)], tags)


def _rectangle_mesh(dom, nx, ny, pattern):
    xs = np.linspace(dom.x0, dom.x1, nx + 1)
    ys = np.linspace(dom.y0, dom.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    index = np.arange(len(nodes)).reshape(ny + 1, nx + 1)
    tris = _grid_triangles(nx, ny, index, pattern)
    bedges = _boundary_from_triangles(tris)
    tags = [dom.tag(0.5 * (nodes[a] + nodes[b])) for a, b in bedges]
    return BackgroundMesh(nodes, tris, bedges, tags)


def _lshape_mesh(dom, n, pattern):
    # n divisions per half side; notch quads are skipped
    m = 2 * n
    s = np.linspace(0.0, dom.size, m + 1)
    X, Y = np.meshgrid(s, s)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    index = np.arange(len(nodes)).reshape(m + 1, m + 1)
    tris = _grid_triangles(m, m, index, pattern, keep=lambda i, j: not (i >= n and j >= n))
    bedges = _boundary_from_triangles(tris)
    H, h2 = dom.size, dom.size / 2.0
    tol = 1e-9 * H

    def tag(p):
        x, y = p
        if abs(y) < tol:
            return "bottom"
        if abs(x) < tol:
            return "left"
        if abs(x - H) < tol:
            return "right"
        if abs(y - H) < tol:
            return "top"
        if abs(y - h2) < tol:
            return "notch_h"
        return "notch_v"

    tags = [tag(0.5 * (nodes[a] + nodes[b])) for a, b in bedges]
    return _compact(nodes, tris, bedges, tags)


def _mapped_mesh(point, nx, ny, pattern, tagger):
    """Grid over a mapped logical square ``point(s, t)`` with s, t in [0, 1]."""
    nodes = np.array([point(i / nx, j / ny) for j in range(ny + 1) for i in range(nx + 1)])
    index = np.arange(len(nodes)).reshape(ny + 1, nx + 1)
    tris = _grid_triangles(nx, ny, index, pattern)
    bedges = _boundary_from_triangles(tris)
    logical = np.array([(i / nx, j / ny) for j in range(ny + 1) for i in range(nx + 1)])
    tags = [tagger(0.5 * (logical[a] + logical[b])) for a, b in bedges]
    return BackgroundMesh(nodes, tris, bedges, tags)


def _annulus_mesh(dom, nr, nt, pattern):
    def point(s, t):
        r = dom.r_in + s * (dom.r_out - dom.r_in)
        th = 0.5 * math.pi * t
        if t == 1.0:
            return (0.0, r)
        return (r * math.cos(th), r * math.sin(th))

    def tagger(q):
        s, t = q
        if s < 1e-12:
            return "inner"
        if s > 1 - 1e-12:
            return "outer"
        return "bottom" if t < 0.5 else "left"

    return _mapped_mesh(point, nr, nt, pattern, tagger)


def _plate_hole_mesh(dom, nr, nt, pattern):
    a, r0, g = dom.a, dom.r0, dom.grading
    if not g > 0.0:
        raise ConfigurationError("grading must be positive")

    def point(s, t):
        if g != 1.0 and 0.0 < s < 1.0:
            s = math.expm1(s * math.log(g)) / (g - 1.0)
        th = 0.5 * math.pi * t
        inner = (0.0, r0) if t == 1.0 else (r0 * math.cos(th), r0 * math.sin(th))
        if t <= 0.5:
            outer = (a, 2.0 * t * a)
        else:
            outer = ((2.0 - 2.0 * t) * a, a)
        return ((1 - s) * inner[0] + s * outer[0], (1 - s) * inner[1] + s * outer[1])

    def tagger(q):
        s, t = q
        if s < 1e-12:
            return "hole"
        if s > 1 - 1e-12:
            return "right" if t < 0.5 else "top"
        return "bottom" if t < 0.5 else "left"

    return _mapped_mesh(point, nr, nt, pattern, tagger)


def _distort(mesh, seed, amplitude=0.3):
    """Jitter interior nodes by at most ``amplitude`` x their shortest incident edge."""
    rng = np.random.default_rng(seed)
    edges = mesh.edges()
    lengths = np.linalg.norm(mesh.nodes[edges[:, 0]] - mesh.nodes[edges[:, 1]], axis=1)
    local = np.full(mesh.n_nodes, np.inf)
    np.minimum.at(local, edges[:, 0], lengths)
    np.minimum.at(local, edges[:, 1], lengths)
    interior = np.ones(mesh.n_nodes, dtype=bool)
    interior[np.unique(mesh.boundary_edges)] = False
    radius = amplitude * rng.random(mesh.n_nodes)
    angle = 2.0 * math.pi * rng.random(mesh.n_nodes)
    offset = np.column_stack([np.cos(angle), np.sin(angle)]) * (radius * local)[:, None]
    offset[~interior] = 0.0
    for _ in range(5):
        trial = BackgroundMesh(mesh.nodes + offset, mesh.triangles, mesh.boundary_edges,
                               mesh.boundary_tags)
        if np.all(trial.signed_areas() > 0.0):
            return trial
        offset *= 0.5
    raise MeshError("distortion keeps inverting triangles after 5 attempts")


def generate_structured_mesh(domain, divisions, seed=None, pattern="alternate"):
    """Deterministic triangulation of one of the supported domains.

    ``divisions`` is an int or an ``(n1, n2)`` pair: (x, y) divisions for a
    rectangle, (radial, angular) for the annulus and plate-with-hole, and
    divisions per half side for the L-shape.  With ``seed`` the interior
    nodes are jittered reproducibly.
    """
    if isinstance(domain, dict):
        domain = domain_from_spec(domain)
    n1, n2 = (divisions, divisions) if np.isscalar(divisions) else divisions
    n1, n2 = int(n1), int(n2)
    if min(n1, n2) < 1:
        raise ConfigurationError("divisions must be >= 1")
    if pattern not in ("alternate", "uniform"):
        raise ConfigurationError(f"unknown triangulation pattern {pattern!r}")
    if isinstance(domain, Rectangle):
        mesh = _rectangle_mesh(domain, n1, n2, pattern)
    elif isinstance(domain, LShape):
        mesh = _lshape_mesh(domain, n1, pattern)
    elif isinstance(domain, QuarterAnnulus):
        mesh = _annulus_mesh(domain, n1, n2, pattern)
    elif isinstance(domain, PlateWithHole):
        if n2 % 2:
            raise ConfigurationError("plate-with-hole needs an even angular division count")
        mesh = _plate_hole_mesh(domain, n1, n2, pattern)
    else:
        raise ConfigurationError(f"unsupported domain {domain!r}")
    if seed is not None:
        mesh = _distort(mesh, seed)
    mesh.validate()
    return mesh


def generate_unstructured_mesh(domain, divisions, seed=0):
    """Seeded Delaunay mesh of a rectangle or a plate with a hole.

    Boundary nodes are evenly spaced; interior nodes are random points kept
    apart by a minimum distance (rectangle) or a jittered lattice (plate).
    """
    if isinstance(domain, PlateWithHole):
        return _unstructured_plate(domain, int(divisions), seed)
    if not isinstance(domain, Rectangle):
        raise ConfigurationError("unstructured generation supports rectangles and plates with a hole")
    nx, ny = (divisions, divisions) if np.isscalar(divisions) else divisions
    dx = (domain.x1 - domain.x0) / nx
    dy = (domain.y1 - domain.y0) / ny
    xs = np.linspace(domain.x0, domain.x1, nx + 1)
    ys = np.linspace(domain.y0, domain.y1, ny + 1)
    boundary = ([(x, domain.y0) for x in xs[:-1]] + [(domain.x1, y) for y in ys[:-1]]
                + [(x, domain.y1) for x in xs[:0:-1]] + [(domain.x0, y) for y in ys[:0:-1]])
    rng = np.random.default_rng(seed)
    spacing = min(dx, dy)
    target = (nx - 1) * (ny - 1)
    pts = list(boundary)
    accepted = []
    tries = 0
    while len(accepted) < target and tries < 200 * target:
        tries += 1
        p = (rng.uniform(domain.x0 + 0.5 * dx, domain.x1 - 0.5 * dx),
             rng.uniform(domain.y0 + 0.5 * dy, domain.y1 - 0.5 * dy))
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= (0.6 * spacing) ** 2
               for q in accepted):
            accepted.append(p)
    nodes = np.array(pts + accepted)
    tri = Delaunay(nodes).simplices.astype(np.int64)
    mesh = BackgroundMesh(nodes, tri, np.zeros((0, 2)), [])
    areas = mesh.signed_areas()
    tri[areas < 0] = tri[areas < 0][:, [0, 2, 1]]
    tri = tri[np.abs(areas) > 1e-12 * domain.area()]
    bedges = _boundary_from_triangles(tri.tolist())
    tags = [domain.tag(0.5 * (nodes[a] + nodes[b])) for a, b in bedges]
    mesh = BackgroundMesh(nodes, tri, bedges, tags)
    mesh.validate()
    return mesh


def _unstructured_plate(dom, n, seed):
    """``n`` divisions per outer side; the hole arc gets the same spacing."""
    a, r0 = dom.a, dom.r0
    s = a / n
    rng = np.random.default_rng(seed)
    nh = max(2, int(math.ceil(0.5 * math.pi * r0 / s)))
    th = np.linspace(0.0, 0.5 * math.pi, nh + 1)
    hole = np.column_stack([r0 * np.cos(th), r0 * np.sin(th)])
    hole[-1] = (0.0, r0)
    nb = int(math.ceil((a - r0) / s))
    t = np.linspace(0.0, 1.0, nb + 1)[1:]
    edge = np.linspace(0.0, a, n + 1)
    boundary = np.vstack([
        hole,
        np.column_stack([r0 + (a - r0) * t, np.zeros(nb)]),
        np.column_stack([np.full(n, a), edge[1:]]),
        np.column_stack([edge[:-1], np.full(n, a)]),
        np.column_stack([np.zeros(nb - 1), r0 + (a - r0) * t[:-1]]),
    ])
    g = np.arange(0.5, n) * s
    grid = np.array([(x + 0.25 * s * (-1) ** j, y) for j, y in enumerate(g) for x in g])
    grid += 0.6 * s * (rng.random(grid.shape) - 0.5)
    r = np.hypot(grid[:, 0], grid[:, 1])
    keep = ((r > r0 + 0.5 * s) & (grid[:, 0] > 0.5 * s) & (grid[:, 1] > 0.5 * s)
            & (grid[:, 0] < a - 0.5 * s) & (grid[:, 1] < a - 0.5 * s))
    nodes = np.vstack([boundary, grid[keep]])
    tri = Delaunay(nodes).simplices.astype(np.int64)
    on_hole = tri < len(hole)
    tri = tri[~on_hole.all(axis=1)]
    e1 = nodes[tri[:, 1]] - nodes[tri[:, 0]]
    e2 = nodes[tri[:, 2]] - nodes[tri[:, 0]]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    tri[area < 0] = tri[area < 0][:, [0, 2, 1]]
    tri = tri[np.abs(area) > 1e-12 * a * a]
    bedges = _boundary_from_triangles(tri.tolist())

    def tag(p):
        x, y = p
        tol = 1e-9 * a
        if abs(y) < tol:
            return "bottom"
        if abs(x) < tol:
            return "left"
        if abs(x - a) < tol:
            return "right"
        if abs(y - a) < tol:
            return "top"
        return "hole"

    mesh = BackgroundMesh(nodes, tri, bedges, [tag(0.5 * (nodes[i] + nodes[j])) for i, j in bedges])
    mesh.validate()
    return mesh


# --------------------------------------------------------------------------
# nodal cells

@dataclass
class NodalCell:
    """Polygonal integration cell of one node (counterclockwise vertices)."""

    node_index: int
    node_coords: np.ndarray
    vertices: np.ndarray
    area: float
    midpoints: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray

    @property
    def edges(self):
        return list(zip(self.midpoints, self.normals, self.lengths))

    def diameter(self):
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=2)))


@dataclass
class NeumannSegment:
    """Length of influence of a node on a tagged boundary.

    ``points``/``weights`` is the 1D quadrature actually used for tractions:
    either the two boundary pieces of the node's cell (``rule="cell"``) or the
    node itself with weight ``length`` (``rule="nodal"``).
    """

    node_index: int
    coords: np.ndarray
    length: float
    tag: str
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray


@dataclass
class CellPartition:
    mesh: BackgroundMesh
    cells: list
    h: float
    h_a: np.ndarray
    neumann_segments: dict = field(default_factory=dict)

    @property
    def nodes(self):
        return self.mesh.nodes

    def total_area(self):
        return float(sum(c.area for c in self.cells))

    def segments(self, tag, rule="cell"):
        key = (tag, rule)
        if key not in self.neumann_segments:
            self.neumann_segments[key] = build_neumann_segments(self.mesh, tag, rule)
        return self.neumann_segments[key]


def _polygon_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _fans(mesh):
    """Incident triangles of each node in counterclockwise order.

    Returns ``(fan, closed)`` where ``fan[a]`` lists (triangle, j, k) with the
    triangle spanning from neighbor j to neighbor k around a.
    """
    n = mesh.n_nodes
    step = [dict() for _ in range(n)]
    for t, (i, j, k) in enumerate(mesh.triangles.tolist()):
        for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
            if b in step[a]:
                raise MeshError(f"node {a} has a non-manifold fan")
            step[a][b] = (t, c)
    fans, closed = [], []
    for a in range(n):
        nxt = step[a]
        if not nxt:
            raise MeshError(f"node {a} belongs to no triangle")
        ends = {c for _, c in nxt.values()}
        starts = [b for b in nxt if b not in ends]
        if len(starts) > 1:
            raise MeshError(f"node {a}: incident triangles do not form a single fan")
        start = starts[0] if starts else min(nxt)
        fan, b = [], start
        while b in nxt and len(fan) <= len(nxt):
            t, c = nxt[b]
            fan.append((t, b, c))
            b = c
            if b == start:
                break
        if len(fan) != len(nxt):
            raise MeshError(f"node {a}: incident triangles do not form a single fan")
        fans.append(fan)
        closed.append(not starts)
    return fans, closed


def build_nodal_cells(mesh):
    """Median-dual cell of every node; boundary cells close through the node."""
    fans, closed = _fans(mesh)
    x = mesh.nodes
    centroids = x[mesh.triangles].sum(axis=1) / 3.0
    edges = mesh.edges()
    mids = 0.5 * (x[edges[:, 0]] + x[edges[:, 1]])
    edge_id = {(int(a), int(b)): e for e, (a, b) in enumerate(edges)}

    def mid(a, b):
        return mids[edge_id[(min(a, b), max(a, b))]]

    cells = []
    for a, (fan, is_closed) in enumerate(zip(fans, closed)):
        verts = [] if is_closed else [x[a], mid(a, fan[0][1])]
        for t, _, c in fan:
            verts.append(centroids[t])
            if is_closed and c == fan[0][1]:
                verts.insert(0, mid(a, c))
            else:
                verts.append(mid(a, c))
        v = np.array(verts)
        w = np.roll(v, -1, axis=0)
        d = w - v
        lengths = np.hypot(d[:, 0], d[:, 1])
        keep = lengths > 0.0
        normals = np.column_stack([d[:, 1], -d[:, 0]])[keep] / lengths[keep, None]
        cells.append(NodalCell(
            node_index=a, node_coords=x[a].copy(), vertices=v,
            area=_polygon_area(v), midpoints=(0.5 * (v + w))[keep],
            normals=normals, lengths=lengths[keep]))
    return cells


def characteristic_spacing(mesh):
    """Mean length of the mesh edges incident to each node."""
    e = mesh.edges()
    length = np.linalg.norm(mesh.nodes[e[:, 0]] - mesh.nodes[e[:, 1]], axis=1)
    total = np.zeros(mesh.n_nodes)
    count = np.zeros(mesh.n_nodes)
    np.add.at(total, e.ravel(), np.repeat(length, 2))
    np.add.at(count, e.ravel(), 1.0)
    return total / count


def build_partition(mesh):
    mesh.validate()
    cells = build_nodal_cells(mesh)
    h = max(c.diameter() for c in cells)
    return CellPartition(mesh=mesh, cells=cells, h=h, h_a=characteristic_spacing(mesh))


def build_neumann_segments(mesh, tag, rule="cell"):
    """One segment per node of the boundary edges tagged ``tag``.

    ``length`` is half the summed length of the node's tagged edges.  With
    ``rule="cell"`` the quadrature uses the midpoints of the two half edges,
    which coincide with the boundary edges of the nodal cells.
    """
    if rule not in ("cell", "nodal"):
        raise ConfigurationError(f"unknown Neumann rule {rule!r}")
    mask = np.array([t == tag for t in mesh.boundary_tags], dtype=bool)
    if not mask.any():
        raise ConfigurationError(f"unknown boundary tag {tag!r}; have {mesh.tags}")
    x = mesh.nodes
    pieces = {}
    for a, b in mesh.boundary_edges[mask].tolist():
        m = 0.5 * (x[a] + x[b])
        d = x[b] - x[a]
        length = float(np.hypot(*d))
        n = np.array([d[1], -d[0]]) / length
        pieces.setdefault(a, []).append((0.5 * (x[a] + m), 0.5 * length, n))
        pieces.setdefault(b, []).append((0.5 * (m + x[b]), 0.5 * length, n))
    segs = []
    for a in sorted(pieces):
        pts = np.array([p for p, _, _ in pieces[a]])
        wts = np.array([w for _, w, _ in pieces[a]])
        nrm = np.array([n for _, _, n in pieces[a]])
        total = float(wts.sum())
        if rule == "nodal":
            avg = nrm.sum(axis=0)
            pts, wts, nrm = x[a][None, :].copy(), np.array([total]), (avg / np.linalg.norm(avg))[None, :]
        segs.append(NeumannSegment(node_index=a, coords=x[a].copy(), length=total, tag=tag,
                                   points=pts, weights=wts, normals=nrm))
    return segs
