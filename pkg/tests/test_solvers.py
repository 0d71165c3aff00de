import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from nived.assembly import NivedDiscretization
from nived.errors import ConfigurationError, SolverError
from nived.geometry import Rectangle, build_partition, generate_structured_mesh
from nived.materials import MaxwellModel, d_matrix
from nived.solvers import (
    Newmark,
    SolveConfig,
    TimeHistory,
    count_rigid_modes,
    eigen_smallest,
    linear_solve,
    newmark_solve,
    newmark_step,
    viscoelastic_solve,
)


def test_identity_solve():
    f = np.arange(5.0)
    assert np.array_equal(linear_solve(sp.identity(5, format="csc"), f), f)


def test_singular_matrix_reported():
    with pytest.raises(SolverError):
        linear_solve(sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), np.ones(2))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolveConfig(dt=0.0)
    with pytest.raises(SolverError):
        h = TimeHistory()
        h.append(1.0, None)
        h.append(1.0, None)


def test_eigen_diagonal():
    K = sp.diags(np.arange(1.0, 11.0))
    vals, vecs, scale = eigen_smallest(K, 3)
    assert np.allclose(vals, [1, 2, 3]) and scale == pytest.approx(10.0)
    assert np.allclose(np.abs(vecs[:3]), np.eye(3))
    assert np.all(vecs.max(axis=0) > 0)
    with pytest.raises(ConfigurationError):
        eigen_smallest(K, 0)


def test_eigen_sparse_path_matches_dense():
    rng = np.random.default_rng(0)
    n = 60
    A = sp.random(n, n, density=0.1, random_state=1)
    K = (A @ A.T + sp.identity(n)).tocsr()
    dv, dvec, _ = eigen_smallest(K, 6)
    sv, svec, _ = eigen_smallest(K, 6, dense_limit=10)
    assert np.allclose(dv, sv, rtol=1e-8)
    assert np.allclose(np.abs(dvec.T @ svec), np.eye(6), atol=1e-6)
    assert rng is not None


def test_rigid_mode_count_on_mesh():
    part = build_partition(generate_structured_mesh(Rectangle(0, 0, 1, 1), 5, seed=2))
    K = NivedDiscretization(part).stiffness(d_matrix(1.0, 0.3))
    vals, _, scale = eigen_smallest(K, 6)
    assert count_rigid_modes(vals, scale) == 3


def test_single_dof_oscillator_amplitude():
    M, K = sp.csr_matrix([[1.0]]), sp.csr_matrix([[4 * math.pi**2]])
    dt = 1.0 / 100
    hist, _ = newmark_solve(M, K, lambda t: np.zeros(1), [1.0], [0.0], dt, 100)
    d = np.array(hist.displacements)[:, 0]
    v = np.array(hist.velocities)[:, 0]
    amp = np.sqrt(d**2 + (v / (2 * math.pi))**2)
    assert np.abs(amp - 1.0).max() <= 1e-6


def test_zero_force_zero_history():
    M = sp.identity(3, format="csr")
    K = sp.diags([2.0, 3.0, 4.0]).tocsr()
    hist, _ = newmark_solve(M, K, lambda t: np.zeros(3), np.zeros(3), np.zeros(3), 0.1, 10)
    assert all(np.all(d == 0.0) for d in hist.displacements)


def test_newmark_step_function():
    M, K = sp.identity(1, format="csr"), sp.csr_matrix([[1.0]])
    d, v, a = newmark_step(M, K, np.zeros(1), (np.ones(1), np.zeros(1), -np.ones(1)), 0.1)
    # trapezoidal rule on the harmonic oscillator: cos-like update
    assert d[0] == pytest.approx((1 - 0.0025) / (1 + 0.0025))


def test_prescribed_dofs_follow_data():
    M = sp.identity(2, format="csr")
    K = sp.csr_matrix([[2.0, -1.0], [-1.0, 2.0]])
    g = lambda t: (np.array([t**2]), np.array([2 * t]), np.array([2.0]))  # noqa: E731
    hist, _ = newmark_solve(M, K, lambda t: np.zeros(2), np.zeros(2), np.zeros(2), 0.1, 5,
                            fixed=np.array([0]), prescribed=g)
    assert np.allclose([d[0] for d in hist.displacements], np.array(hist.times) ** 2)


@given(seed=st.integers(0, 2**32 - 1))
def test_newmark_energy_conservation(seed):
    rng = np.random.default_rng(seed)
    n = 8
    A, B = rng.normal(size=(n, n)), rng.normal(size=(n, n))
    M = A @ A.T + n * np.eye(n)
    K = B @ B.T
    nm = Newmark(sp.csr_matrix(M), sp.csr_matrix(K), 0.05)
    d, v = rng.normal(size=n), rng.normal(size=n)
    a = nm.initial_acceleration(np.zeros(n), d)
    energy = lambda d, v: 0.5 * v @ M @ v + 0.5 * d @ K @ d  # noqa: E731
    e0 = energy(d, v)
    for _ in range(100):
        prev = energy(d, v)
        d, v, a = nm.step(d, v, a, np.zeros(n))
        assert abs(energy(d, v) - prev) <= 1e-10 * prev
    assert abs(energy(d, v) - e0) <= 1e-10 * e0 * 100


def small_visco(mu0=0.7):
    part = build_partition(generate_structured_mesh(Rectangle(0, 0, 1, 1), 4, seed=1))
    disc = NivedDiscretization(part)
    left = np.nonzero(np.isclose(disc.nodes[:, 0], 0.0))[0]
    fixed = np.concatenate([2 * left, 2 * left + 1])
    f = disc.traction("right", lambda x, n: np.tile([1.0, 0.0], (len(x), 1)))
    return disc, MaxwellModel(1000.0, 0.3, mu0, 1.0 - mu0, 1.0), f, fixed


def test_newton_iterations_and_creep():
    disc, model, f, fixed = small_visco()
    steps = viscoelastic_solve(disc, model, f, fixed, np.zeros(len(fixed)),
                               SolveConfig(dt=1.0, n_steps=5))
    assert all(s.iterations <= 2 for s in steps)
    tip = [s.displacement[0::2].max() for s in steps]
    assert np.all(np.diff(tip) > 0)


def test_mu1_zero_matches_elastic_solve():
    disc, model, f, fixed = small_visco(mu0=1.0)
    steps = viscoelastic_solve(disc, model, f, fixed, np.zeros(len(fixed)),
                               SolveConfig(dt=0.5, n_steps=3))
    K = disc.stiffness(d_matrix(1000.0, 0.3, "plane_strain")).tocsr()
    free = np.setdiff1d(np.arange(disc.n_dofs), fixed)
    d = np.zeros(disc.n_dofs)
    d[free] = linear_solve(K[free][:, free], f[free])
    for s in steps:
        assert np.allclose(s.displacement, d, rtol=1e-12, atol=1e-12 * np.abs(d).max())
