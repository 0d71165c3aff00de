import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import rigid_modes
from nived.assembly import (
    GlobalSystem,
    MemDiscretization,
    NivedDiscretization,
    apply_dirichlet,
    assemble,
    cell_mass,
    cell_stiffness,
    make_discretization,
    merge_constraints,
)
from nived.errors import ConfigurationError, SolverError
from nived.geometry import Rectangle, build_partition, generate_structured_mesh
from nived.materials import d_matrix
from nived.solvers import linear_solve, solve_reduced

D = d_matrix(1.0, 0.3)


def test_cell_operators_annihilate_rigid_motion(square_nived):
    disc = square_nived
    for e in range(disc.n_nodes):
        ops = disc.cell_operators(e)
        x = disc.nodes[ops.contributors]
        parts = cell_stiffness(ops, D)
        for mode in rigid_modes(x, disc.nodes[e]):
            assert np.abs(parts.total @ mode).max() <= 1e-10 * np.abs(parts.total).max()


def test_consistency_rank_three(square_nived):
    for e in (0, 7, 20):
        Kc = cell_stiffness(square_nived.cell_operators(e), D).consistency
        s = np.linalg.svd(Kc, compute_uv=False)
        assert np.sum(s > 1e-10 * s[0]) == 3


def test_projection_reproduces_linear_fields(square_nived):
    rng = np.random.default_rng(0)
    for e in (3, 15, 30):
        ops = square_nived.cell_operators(e)
        A, b = rng.normal(size=(2, 2)), rng.normal(size=2)
        u = (square_nived.nodes[ops.contributors] @ A.T + b).reshape(-1)
        assert np.allclose(ops.P @ u, u, atol=1e-12 * np.abs(u).max())


def test_constant_translation_mass(square_nived):
    M = square_nived.mass(2.5)
    q = np.zeros(square_nived.n_dofs)
    q[0::2] = 1.0
    q[1::2] = 1.0
    assert q @ M @ q == pytest.approx(2 * 2.5 * 1.0, rel=1e-12)
    ops = square_nived.cell_operators(4)
    Me = cell_mass(ops, 1.0)
    assert np.allclose(Me, Me.T)


def test_mem_translation_mass(square_partition):
    M = MemDiscretization(square_partition, rule=3).mass(1.0)
    q = np.ones(M.shape[0])
    assert q @ M @ q == pytest.approx(2.0, rel=1e-10)


@pytest.mark.parametrize("method,rule", [("nived", None), ("mem", 3)])
def test_top_traction_resultant(square_partition, method, rule):
    disc = make_discretization(square_partition, method, rule=rule)
    f = disc.traction("top", lambda x, n: np.tile([0.0, 3.0], (len(x), 1)))
    assert f[0::2].sum() == pytest.approx(0.0, abs=1e-12)
    assert f[1::2].sum() == pytest.approx(3.0, rel=1e-12)


def test_body_force_resultant(square_nived):
    f = square_nived.body_force(lambda x: np.tile([1.0, -2.0], (len(x), 1)))
    assert f[0::2].sum() == pytest.approx(1.0) and f[1::2].sum() == pytest.approx(-2.0)


def test_one_cell_global_equals_local():
    part = build_partition(generate_structured_mesh(Rectangle(0, 0, 1, 1), 2))
    disc = NivedDiscretization(part)
    ops = disc.cell_operators(4)
    Ke = cell_stiffness(ops, D).total
    dofs = np.stack([2 * ops.contributors, 2 * ops.contributors + 1], 1).reshape(-1)
    K = assemble(disc.n_dofs, dofs[None], Ke[None]).toarray()
    assert np.allclose(K[np.ix_(dofs, dofs)], Ke, atol=1e-15)
    total = disc.stiffness(D).toarray()
    cells = sum(
        assemble(disc.n_dofs,
                 np.stack([2 * o.contributors, 2 * o.contributors + 1], 1).reshape(-1)[None],
                 cell_stiffness(o, D).total[None]).toarray()
        for o in (disc.cell_operators(e) for e in range(disc.n_nodes)))
    assert np.allclose(total, cells, atol=1e-13 * np.abs(total).max())


def test_global_stiffness_symmetric_psd_with_rigid_kernel(square_nived):
    K = square_nived.stiffness(D)
    assert abs(K - K.T).max() == 0.0
    modes = rigid_modes(square_nived.nodes)
    assert np.abs(K @ modes.T).max() <= 1e-10 * abs(K).max()
    assert np.linalg.eigvalsh(K.toarray()).min() >= -1e-10 * abs(K).max()


def test_stiffness_parts_sum(square_nived):
    Kc, Ks = square_nived.stiffness_parts(D)
    assert abs(Kc + Ks - square_nived.stiffness(D)).max() <= 1e-13 * abs(Kc).max()
    with pytest.raises(ConfigurationError):
        square_nived.stiffness(D, part="geometric")


def test_all_dofs_constrained():
    K = sp.identity(4, format="csr")
    red = apply_dirichlet(GlobalSystem(K, np.ones(4)), np.arange(4), [1.0, 2.0, 3.0, 4.0])
    assert red.matrix.shape == (0, 0)
    assert np.array_equal(solve_reduced(red), [1.0, 2.0, 3.0, 4.0])


def test_floating_body_is_singular(square_nived):
    K = square_nived.stiffness(D)
    with pytest.raises(SolverError):
        linear_solve(K, np.ones(K.shape[0]))


def test_conflicting_constraints():
    with pytest.raises(ConfigurationError):
        merge_constraints([1, 1], [0.0, 1.0])
    dofs, vals = merge_constraints([3, 1, 3], [2.0, 0.5, 2.0])
    assert np.array_equal(dofs, [1, 3]) and np.array_equal(vals, [0.5, 2.0])


def test_dirichlet_elimination_solution():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(6, 6))
    K = sp.csr_matrix(A @ A.T + 6 * np.eye(6))
    x = rng.normal(size=6)
    red = apply_dirichlet(GlobalSystem(K, K @ x), [0, 4], x[[0, 4]])
    assert np.allclose(solve_reduced(red), x)


def test_mem_requires_rule(square_partition):
    with pytest.raises(ConfigurationError):
        make_discretization(square_partition, "mem", rule=None)
    with pytest.raises(ConfigurationError):
        make_discretization(square_partition, "fem")


@pytest.mark.parametrize("rule", [1, 3, 6, 12])
def test_mem_stiffness_rigid_kernel(square_partition, rule):
    K = MemDiscretization(square_partition, rule=rule).stiffness(D)
    modes = rigid_modes(square_partition.nodes)
    assert np.abs(K @ modes.T).max() <= 1e-9 * abs(K).max()


@given(seed=st.integers(0, 1000))
def test_nodal_strain_exact_for_linear_field(seed):
    part = build_partition(generate_structured_mesh(Rectangle(0, 0, 1, 1), 4, seed=seed))
    disc = NivedDiscretization(part)
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2, 2))
    d = (disc.nodes @ A.T).reshape(-1)
    eps = disc.nodal_strain(d)
    assert np.allclose(eps, [A[0, 0], A[1, 1], A[0, 1] + A[1, 0]], atol=1e-11)
    # internal force of the matching stress equals K d
    f = disc.internal_force(eps @ D.T) + disc.stiffness(D, "stability") @ d
    assert np.allclose(f, disc.stiffness(D) @ d, atol=1e-11)
