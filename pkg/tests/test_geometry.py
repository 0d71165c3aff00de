import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nived.errors import ConfigurationError, MeshError
from nived.geometry import (
    BackgroundMesh,
    LShape,
    PlateWithHole,
    QuarterAnnulus,
    Rectangle,
    build_neumann_segments,
    build_nodal_cells,
    build_partition,
    characteristic_spacing,
    domain_from_spec,
    generate_structured_mesh,
    generate_unstructured_mesh,
    read_mesh,
    write_mesh,
)

DOMAINS = [
    (Rectangle(0, 0, 2, 1), (6, 3)),
    (QuarterAnnulus(1.0, 5.0), (4, 6)),
    (LShape(100.0), 3),
    (PlateWithHole(5.0, 1.0), (4, 8)),
    (PlateWithHole(5.0, 1.0, 4.0), (4, 8)),
]


def test_equilateral_triangle_cells_split_area():
    mesh = BackgroundMesh([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]], [[0, 1, 2]],
                          [[0, 1], [1, 2], [2, 0]], ["b", "b", "b"])
    cells = build_nodal_cells(mesh)
    for c in cells:
        assert c.area == pytest.approx(math.sqrt(3) / 12, rel=1e-14)


def test_two_triangle_square_partition():
    mesh = BackgroundMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]],
                          [[0, 1], [1, 2], [2, 3], [3, 0]], ["s"] * 4)
    assert sum(c.area for c in build_nodal_cells(mesh)) == pytest.approx(1.0, rel=1e-14)


def test_regular_mesh_interior_cells_equal():
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), 6, pattern="uniform")
    part = build_partition(mesh)
    interior = np.setdiff1d(np.arange(mesh.n_nodes), np.unique(mesh.boundary_edges))
    areas = np.array([part.cells[i].area for i in interior])
    assert np.allclose(areas, (1 / 6) ** 2, rtol=1e-12)


def test_rectangle_counts():
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), 2)
    assert mesh.n_nodes == 9 and len(mesh.triangles) == 8


def test_distortion_is_deterministic():
    a = generate_structured_mesh(Rectangle(0, 0, 1, 1), 5, seed=42)
    b = generate_structured_mesh(Rectangle(0, 0, 1, 1), 5, seed=42)
    assert np.array_equal(a.nodes, b.nodes)
    assert not np.array_equal(a.nodes, generate_structured_mesh(Rectangle(0, 0, 1, 1), 5).nodes)


def test_distortion_bounded_and_boundary_fixed():
    ref = generate_structured_mesh(Rectangle(0, 0, 1, 1), 8)
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), 8, seed=3)
    shift = np.linalg.norm(mesh.nodes - ref.nodes, axis=1)
    assert shift.max() <= 0.3 * (1 / 8) + 1e-15
    assert np.all(shift[np.unique(ref.boundary_edges)] == 0.0)


def test_annulus_radii():
    mesh = generate_structured_mesh(QuarterAnnulus(1.0, 5.0), (4, 8))
    r = np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])
    assert r.min() >= 1.0 - 1e-12 and r.max() <= 5.0 + 1e-12


@pytest.mark.parametrize("domain,div", DOMAINS)
def test_area_partition_and_closed_cells(domain, div):
    mesh = generate_structured_mesh(domain, div, seed=1)
    part = build_partition(mesh)
    assert part.total_area() == pytest.approx(mesh.area(), rel=1e-10)
    for c in part.cells:
        assert c.area > 0
        perimeter = c.lengths.sum()
        assert np.linalg.norm((c.lengths[:, None] * c.normals).sum(axis=0)) <= 1e-12 * perimeter


@pytest.mark.parametrize("domain,div", DOMAINS)
def test_tagged_boundaries_cover_boundary(domain, div):
    mesh = generate_structured_mesh(domain, div)
    total = 0.0
    for tag in mesh.tags:
        total += sum(s.length for s in build_neumann_segments(mesh, tag))
    d = mesh.nodes[mesh.boundary_edges[:, 1]] - mesh.nodes[mesh.boundary_edges[:, 0]]
    assert total == pytest.approx(np.hypot(d[:, 0], d[:, 1]).sum(), rel=1e-12)


def test_neumann_lengths_on_edge():
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), 4)
    segs = build_neumann_segments(mesh, "top")
    lengths = sorted(s.length for s in segs)
    assert lengths[0] == pytest.approx(1 / 8) and lengths[-1] == pytest.approx(1 / 4)
    assert sum(lengths) == pytest.approx(1.0, rel=1e-14)
    for s in segs:
        assert s.weights.sum() == pytest.approx(s.length, rel=1e-14)


def test_unknown_tag_raises():
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), 2)
    with pytest.raises(ConfigurationError):
        build_neumann_segments(mesh, "nowhere")


@given(seed=st.integers(0, 10_000), a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2))
def test_edge_midpoint_rule_exact_for_linear(seed, a, b, c):
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), 4, seed=seed)
    f = lambda x: a + b * x[..., 0] + c * x[..., 1]  # noqa: E731
    for cell in build_nodal_cells(mesh):
        v, w = cell.vertices, np.roll(cell.vertices, -1, axis=0)
        d = w - v
        # Simpson on each straight edge is exact for the linear integrand
        exact = ((f(v) + 4 * f(0.5 * (v + w)) + f(w)) / 6)[:, None] * np.column_stack([d[:, 1], -d[:, 0]])
        midpoint = (f(cell.midpoints) * cell.lengths)[:, None] * cell.normals
        assert np.allclose(midpoint.sum(0), exact.sum(0), atol=1e-12 * (1 + abs(a) + abs(b) + abs(c)))


@pytest.mark.parametrize("seed", [0, 5])
def test_unstructured_rectangle_and_plate(seed):
    m = generate_unstructured_mesh(Rectangle(0, 0, 1, 1), 6, seed=seed)
    assert build_partition(m).total_area() == pytest.approx(1.0, rel=1e-10)
    p = generate_unstructured_mesh(PlateWithHole(5, 1), 8, seed=seed)
    assert set(p.tags) == {"hole", "bottom", "right", "top", "left"}
    assert build_partition(p).total_area() == pytest.approx(p.area(), rel=1e-10)


def test_mesh_roundtrip(tmp_path):
    mesh = generate_structured_mesh(LShape(10.0), 2, seed=4)
    path = tmp_path / "m.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert np.array_equal(back.nodes, mesh.nodes)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert back.boundary_tags == mesh.boundary_tags


def test_read_mesh_comments_and_errors(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# square\nnodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2  # ccw\n"
                    "boundary 3\n0 1 a\n1 2 b\n2 0 c\n")
    assert read_mesh(path).n_nodes == 3
    path.write_text("nodes 3\n0 0\n1 0\n")
    with pytest.raises(ConfigurationError):
        read_mesh(path)


def test_inverted_triangle_rejected():
    mesh = BackgroundMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]], [[0, 2], [2, 1], [1, 0]], ["b"] * 3)
    with pytest.raises(MeshError):
        mesh.validate()


def test_characteristic_spacing_uniform():
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), 4, pattern="uniform")
    h = characteristic_spacing(mesh)
    assert h.min() >= 0.25 - 1e-15 and h.max() <= 0.25 * math.sqrt(2) + 1e-15


def test_domain_from_spec():
    assert domain_from_spec({"kind": "l-shape", "size": 4}).area() == pytest.approx(12.0)
    with pytest.raises(ConfigurationError):
        domain_from_spec({"kind": "circle"})
