"""Plane linear elasticity and the one-term Generalized Maxwell solid.

Strains are Voigt vectors (eps11, eps22, gamma12) with engineering shear
gamma12 = 2 eps12; stresses are (sig11, sig22, sig12).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from nived.errors import ConfigurationError

M_VECTOR = np.array([1.0, 1.0, 0.0])
# maps engineering deviatoric strain to tensor components for s = 2G * HALF_SHEAR e
HALF_SHEAR = np.diag([1.0, 1.0, 0.5])
DEVIATORIC = HALF_SHEAR - np.outer(M_VECTOR, M_VECTOR) / 3.0


def d_matrix(youngs, poisson, condition="plane_stress"):
    """3x3 elasticity matrix for plane strain or plane stress."""
    E, nu = float(youngs), float(poisson)
    if not E > 0.0:
        raise ConfigurationError("Young's modulus must be positive")
    if condition == "plane_strain":
        if not -1.0 < nu < 0.5:
            raise ConfigurationError(
                f"plane strain requires -1 < nu < 0.5 (nu = {nu} is incompressible or invalid)")
        c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return c * np.array([[1.0 - nu, nu, 0.0],
                             [nu, 1.0 - nu, 0.0],
                             [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)]])
    if condition == "plane_stress":
        if not -1.0 < nu < 1.0:
            raise ConfigurationError(f"plane stress requires -1 < nu < 1, got {nu}")
        c = E / (1.0 - nu * nu)
        return c * np.array([[1.0, nu, 0.0],
                             [nu, 1.0, 0.0],
                             [0.0, 0.0, 0.5 * (1.0 - nu)]])
    raise ConfigurationError(f"unknown condition {condition!r}")


@dataclass(frozen=True)
class ElasticModuli:
    youngs: float
    poisson: float
    condition: str = "plane_stress"

    @property
    def d_matrix(self):
        return d_matrix(self.youngs, self.poisson, self.condition)


@dataclass(frozen=True)
class MaxwellModel:
    """Generalized Maxwell solid with one Prony term.

    The shear relaxation modulus is G(t) = G (mu0 + mu1 exp(-t / lambda1));
    the bulk response K is purely elastic.
    """

    youngs: float
    poisson: float
    mu0: float
    mu1: float
    lambda1: float = 1.0

    def __post_init__(self):
        if not (self.mu0 > 0.0 and self.mu1 >= 0.0 and abs(self.mu0 + self.mu1 - 1.0) < 1e-12):
            raise ConfigurationError("Prony weights need mu0 > 0, mu1 >= 0, mu0 + mu1 = 1")
        if not self.lambda1 > 0.0:
            raise ConfigurationError("relaxation time must be positive")
        if not -1.0 < self.poisson < 0.5:
            raise ConfigurationError("bulk modulus requires -1 < nu < 0.5")

    @property
    def shear(self):
        return self.youngs / (2.0 * (1.0 + self.poisson))

    @property
    def bulk(self):
        return self.youngs / (3.0 * (1.0 - 2.0 * self.poisson))

    @property
    def m_vector(self):
        return M_VECTOR.copy()

    def relaxation_modulus(self, t):
        return self.shear * (self.mu0 + self.mu1 * math.exp(-t / self.lambda1))

    def viscous_factor(self, dt):
        """(lambda1 / dt)(1 - exp(-dt / lambda1)); tends to 1 as dt -> 0."""
        _check_dt(dt)
        x = dt / self.lambda1
        return -math.expm1(-x) / x

    def tangent(self, factor):
        """2G (mu0 + mu1 factor) DEV + K m m^T."""
        g = 2.0 * self.shear * (self.mu0 + self.mu1 * factor)
        return g * DEVIATORIC + self.bulk * np.outer(M_VECTOR, M_VECTOR)


@dataclass
class MaxwellState:
    """History at one or many integration nodes (arrays of shape (..., 3))."""

    strain: np.ndarray
    deviatoric: np.ndarray
    partial_deviatoric: np.ndarray
    stress: np.ndarray = field(default=None)

    @classmethod
    def at_rest(cls, n=None):
        shape = (3,) if n is None else (n, 3)
        z = np.zeros(shape)
        return cls(z.copy(), z.copy(), z.copy(), z.copy())


def deviatoric_strain(eps):
    """e = eps - (1/3) m m^T eps (engineering shear kept)."""
    eps = np.asarray(eps, dtype=float)
    return eps - (eps[..., :1] + eps[..., 1:2]) / 3.0 * M_VECTOR


def _stress(model, eps, e, q):
    s = 2.0 * model.shear * (model.mu0 * e + model.mu1 * q) * np.diag(HALF_SHEAR)
    vol = model.bulk * (eps[..., :1] + eps[..., 1:2]) * M_VECTOR
    return s + vol


def visco_stress_update(model, state, eps_new, dt):
    """Advance the recursion by one step; returns ``(stress, new_state)``."""
    _check_dt(dt)
    eps_new = np.asarray(eps_new, dtype=float)
    e_new = deviatoric_strain(eps_new)
    decay = math.exp(-dt / model.lambda1)
    dq = model.viscous_factor(dt) * (e_new - state.deviatoric)
    q_new = decay * state.partial_deviatoric + dq
    sig = _stress(model, eps_new, e_new, q_new)
    return sig, MaxwellState(eps_new.copy(), e_new, q_new, sig)


def instantaneous_update(model, eps):
    """Sudden loading from rest: the dt -> 0 limit, so q = e."""
    eps = np.asarray(eps, dtype=float)
    e = deviatoric_strain(eps)
    sig = _stress(model, eps, e, e)
    return sig, MaxwellState(eps.copy(), e, e.copy(), sig)


def visco_tangent(model, dt):
    """Consistent tangent d(stress)/d(strain) of :func:`visco_stress_update`."""
    return model.tangent(model.viscous_factor(dt))


def instantaneous_tangent(model):
    return model.tangent(1.0)


def effective_poisson(model, t):
    """(3K - 2G(t)) / (2 (3K + G(t)))."""
    if t < 0:
        raise ConfigurationError("time must be nonnegative")
    K, G = model.bulk, model.relaxation_modulus(t)
    return (3.0 * K - 2.0 * G) / (2.0 * (3.0 * K + G))


def _check_dt(dt):
    if not dt > 0.0:
        raise ConfigurationError(f"time step must be positive, got {dt}")
