import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nived.errors import ConfigurationError
from nived.materials import (
    DEVIATORIC,
    ElasticModuli,
    MaxwellModel,
    MaxwellState,
    d_matrix,
    deviatoric_strain,
    effective_poisson,
    instantaneous_tangent,
    instantaneous_update,
    visco_stress_update,
    visco_tangent,
)

MODEL = MaxwellModel(1000.0, 0.3, 0.7, 0.3, 1.0)


def test_d_matrix_examples():
    assert d_matrix(3e7, 0.3, "plane_stress")[0, 0] == pytest.approx(3.2967e7, rel=1e-4)
    assert d_matrix(1e7, 0.3, "plane_strain")[2, 2] == pytest.approx(3.8462e6, rel=1e-4)
    assert np.allclose(ElasticModuli(1.0, 0.25).d_matrix, d_matrix(1.0, 0.25))


@pytest.mark.parametrize("args", [(1.0, 0.5, "plane_strain"), (-1.0, 0.3, "plane_stress"),
                                  (1.0, 0.3, "axisymmetric")])
def test_d_matrix_errors(args):
    with pytest.raises(ConfigurationError):
        d_matrix(*args)


@given(E=st.floats(1e-3, 1e9), nu=st.floats(-0.9, 0.49))
def test_d_matrix_spd(E, nu):
    for cond in ("plane_stress", "plane_strain"):
        D = d_matrix(E, nu, cond)
        assert np.allclose(D, D.T)
        assert np.linalg.eigvalsh(D).min() > 0


def test_model_validation():
    with pytest.raises(ConfigurationError):
        MaxwellModel(1.0, 0.3, 0.5, 0.6)
    with pytest.raises(ConfigurationError):
        MaxwellModel(1.0, 0.3, 0.7, 0.3, 0.0)
    with pytest.raises(ConfigurationError):
        visco_stress_update(MODEL, MaxwellState.at_rest(), np.zeros(3), 0.0)


def test_zero_strain_zero_stress():
    sig, _ = visco_stress_update(MODEL, MaxwellState.at_rest(), np.zeros(3), 1.0)
    assert np.all(sig == 0.0)


def test_single_step_scalar_oracle():
    eps = np.array([0.01, 0.0, 0.0])
    sig, state = visco_stress_update(MODEL, MaxwellState.at_rest(), eps, 1.0)
    G = 1000.0 / 2.6
    K = 1000.0 / (3 * 0.4)
    tr = 0.01
    e = [0.01 - tr / 3, -tr / 3, 0.0]
    f = 1.0 - math.exp(-1.0)
    q = [f * v for v in e]
    expected = [2 * G * (0.7 * e[0] + 0.3 * q[0]) + K * tr,
                2 * G * (0.7 * e[1] + 0.3 * q[1]) + K * tr,
                0.0]
    assert np.allclose(sig, expected, rtol=1e-14, atol=1e-14)
    assert np.allclose(state.partial_deviatoric, q)


def test_small_dt_is_instantaneous():
    eps = np.array([0.01, -0.003, 0.002])
    sig, _ = visco_stress_update(MODEL, MaxwellState.at_rest(), eps, 1e-9)
    inst, _ = instantaneous_update(MODEL, eps)
    assert np.allclose(sig, inst, rtol=1e-8)
    assert np.allclose(visco_tangent(MODEL, 1e-9), instantaneous_tangent(MODEL), rtol=1e-8)


def test_large_dt_long_term_tangent():
    G, K = MODEL.shear, MODEL.bulk
    m = np.array([1.0, 1.0, 0.0])
    long_term = 2 * G * 0.7 * DEVIATORIC + K * np.outer(m, m)
    assert np.allclose(visco_tangent(MODEL, 1e9), long_term, rtol=1e-8)


def test_effective_poisson_examples():
    vals = [effective_poisson(MaxwellModel(1000.0, 0.3, a, 1 - a, 1.0), 20.0)
            for a in (0.7, 0.3, 0.01)]
    assert vals == pytest.approx([0.3542, 0.4338, 0.4977], abs=5e-5)
    assert effective_poisson(MODEL, 0.0) == pytest.approx(0.3, abs=1e-14)
    with pytest.raises(ConfigurationError):
        effective_poisson(MODEL, -1.0)


def random_state(rng):
    return MaxwellState(rng.normal(size=3) * 1e-2, rng.normal(size=3) * 1e-2,
                        rng.normal(size=3) * 1e-2)


def fd_tangent(model, state, eps, dt, delta=1e-7):
    cols = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = delta
        plus, _ = visco_stress_update(model, state, eps + e, dt)
        minus, _ = visco_stress_update(model, state, eps - e, dt)
        cols.append((plus - minus) / (2 * delta))
    return np.column_stack(cols)


@given(seed=st.integers(0, 2**32 - 1), dt=st.floats(1e-3, 10.0), mu0=st.floats(0.01, 1.0))
def test_tangent_matches_finite_differences(seed, dt, mu0):
    rng = np.random.default_rng(seed)
    model = MaxwellModel(1000.0, 0.3, mu0, 1.0 - mu0, rng.uniform(0.1, 5.0))
    eps = rng.normal(size=3) * 1e-2
    D = visco_tangent(model, dt)
    fd = fd_tangent(model, random_state(rng), eps, dt)
    assert np.abs(D - fd).max() <= 1e-6 * np.abs(D).max()


@given(seed=st.integers(0, 2**32 - 1))
def test_deviatoric_stress_traceless(seed):
    rng = np.random.default_rng(seed)
    state = random_state(rng)
    sig, new = visco_stress_update(MODEL, state, rng.normal(size=3) * 1e-2, 0.5)
    eps = new.strain
    vol = MODEL.bulk * (eps[0] + eps[1])
    s = sig - np.array([vol, vol, 0.0])
    # out-of-plane deviatoric component is -(s11 + s22) under plane strain
    s33 = 2 * MODEL.shear * (MODEL.mu0 * -(eps[0] + eps[1]) / 3
                             + MODEL.mu1 * (-new.partial_deviatoric[0]
                                            - new.partial_deviatoric[1]))
    assert abs(s[0] + s[1] + s33) <= 1e-12 * np.linalg.norm(s)
    assert deviatoric_strain(eps)[:2].sum() == pytest.approx((eps[0] + eps[1]) / 3)


@given(seed=st.integers(0, 2**32 - 1))
def test_update_is_linear(seed):
    rng = np.random.default_rng(seed)
    s1, s2 = random_state(rng), random_state(rng)
    e1, e2 = rng.normal(size=3), rng.normal(size=3)
    a, b = rng.normal(size=2)
    comb = MaxwellState(a * s1.strain + b * s2.strain, a * s1.deviatoric + b * s2.deviatoric,
                        a * s1.partial_deviatoric + b * s2.partial_deviatoric)
    lhs, _ = visco_stress_update(MODEL, comb, a * e1 + b * e2, 0.3)
    r1, _ = visco_stress_update(MODEL, s1, e1, 0.3)
    r2, _ = visco_stress_update(MODEL, s2, e2, 0.3)
    assert np.allclose(lhs, a * r1 + b * r2, rtol=1e-12, atol=1e-12 * np.abs(lhs).max())


def test_mu1_zero_is_elastic():
    model = MaxwellModel(1000.0, 0.3, 1.0, 0.0)
    rng = np.random.default_rng(1)
    state = MaxwellState.at_rest()
    for _ in range(5):
        eps = rng.normal(size=3) * 1e-3
        sig, state = visco_stress_update(model, state, eps, 0.7)
        assert np.allclose(sig, d_matrix(1000.0, 0.3, "plane_strain") @ eps, rtol=1e-12,
                           atol=1e-12 * np.abs(sig).max())
