"""Planar ballbot model.

One median plane of the robot is a ball of radius ``r_b`` rolling without slip,
with the body hinged at the ball centre.  Generalised coordinates are

    theta : ball rotation angle, ball position x = r_b * theta
    phi   : body angle measured relative to the ball rotation

so the body's absolute inclination from vertical is ``theta + phi``.  The
equations of motion are

    M(q) q'' + C(q, q') + G(q) + D(q') = [0, tau]^T

with ``tau`` the torque applied between ball and body.

All functions accept plain floats or broadcastable numpy arrays for the state
components, which is what the batched simulator relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .errors import SingularMass

# Threshold on |det M| below which the mass matrix is treated as singular.
EPS_SING = 1e-9


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants of ball and body (SI units).

    The defaults are plausible values for a person-height ballbot; they are
    not measured data for any particular robot.
    """

    m_b: float = 3.0  # ball mass
    m_B: float = 10.0  # body mass
    I_b: float = 0.02  # ball inertia
    I_B: float = 1.2  # body inertia about the ball centre
    r_b: float = 0.12  # ball radius
    l: float = 0.4  # ball centre to body centre of mass
    mu_theta: float = 0.05  # ball-ground viscous coefficient
    mu_phi: float = 0.05  # ball-body viscous coefficient
    g: float = 9.81

    def __post_init__(self):
        for name in ("m_b", "m_B", "I_b", "I_B", "r_b", "l", "g"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("mu_theta", "mu_phi"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def gamma1(self) -> float:
        return (self.I_b + self.I_B + self.m_b * self.r_b**2
                + self.m_B * self.r_b**2 + self.m_B * self.l**2)

    @property
    def gamma2(self) -> float:
        return self.I_B + self.m_B * self.l**2

    @property
    def coupling(self) -> float:
        """m_B r_b l, the amplitude of the cos(theta+phi) coupling terms."""
        return self.m_B * self.r_b * self.l

    @property
    def upright_det(self) -> float:
        """Gamma2^2 - Gamma1 Gamma2 + (m_B l r_b)^2, i.e. -det M at the upright pose."""
        g1, g2 = self.gamma1, self.gamma2
        return g2 * g2 - g1 * g2 + self.coupling**2

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


class PlanarState(NamedTuple):
    theta: float = 0.0
    phi: float = 0.0
    theta_dot: float = 0.0
    phi_dot: float = 0.0

    @property
    def lean(self):
        """Absolute inclination of the body, theta + phi."""
        return self.theta + self.phi

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass(frozen=True)
class LinearModel:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray


def _unpack(s):
    if isinstance(s, PlanarState):
        return s
    s = np.asarray(s, dtype=float)
    return s[..., 0], s[..., 1], s[..., 2], s[..., 3]


def mass_matrix(p: PhysicalParams, s) -> np.ndarray:
    th, ph, _, _ = _unpack(s)
    x = p.coupling * np.cos(th + ph)
    m11 = p.gamma1 + 2.0 * x
    m12 = p.gamma2 + x
    m22 = np.broadcast_to(p.gamma2, np.shape(x))
    return np.stack([np.stack([m11, m12], -1), np.stack([m12, m22], -1)], -2)


def coriolis(p: PhysicalParams, s) -> np.ndarray:
    th, ph, dth, dph = _unpack(s)
    c0 = -p.coupling * np.sin(th + ph) * (dth + dph) ** 2
    return np.stack([c0, np.zeros_like(c0)], -1)


def gravity(p: PhysicalParams, s) -> np.ndarray:
    th, ph, _, _ = _unpack(s)
    gv = -p.m_B * p.g * p.l * np.sin(th + ph)
    return np.stack([gv, gv], -1)


def damping(p: PhysicalParams, s) -> np.ndarray:
    _, _, dth, dph = _unpack(s)
    return np.stack([p.mu_theta * np.asarray(dth, float), p.mu_phi * np.asarray(dph, float)], -1)


def _closed_form(p, th, ph, dth, dph, tau):
    sn = np.sin(th + ph)
    cs = np.cos(th + ph)
    x = p.coupling * cs
    g2 = p.gamma2
    mgl = p.m_B * p.g * p.l
    a = mgl * sn - p.mu_theta * dth + p.coupling * sn * (dph + dth) ** 2
    b = tau - p.mu_phi * dph + mgl * sn
    c = g2 * g2 - p.gamma1 * g2 + x * x
    if np.any(np.abs(c) <= EPS_SING):
        raise SingularMass(f"mass matrix determinant {np.min(np.abs(c)):.3g} below {EPS_SING}")
    thdd = (b * (g2 + x) - a * g2) / c
    phdd = (a * (g2 + x) - b * (p.gamma1 + 2.0 * x)) / c
    return thdd, phdd


def forward_dynamics(p: PhysicalParams, s, tau) -> np.ndarray:
    """Accelerations [theta'', phi''] from the closed-form inverse of M."""
    th, ph, dth, dph = _unpack(s)
    thdd, phdd = _closed_form(p, th, ph, dth, dph, tau)
    return np.stack([thdd, phdd], -1)


def forward_dynamics_solve(p: PhysicalParams, s, tau) -> np.ndarray:
    """Same as :func:`forward_dynamics` but by a linear solve with M."""
    m = mass_matrix(p, s)
    rhs = -coriolis(p, s) - gravity(p, s) - damping(p, s)
    rhs[..., 1] += tau
    return np.linalg.solve(m, rhs[..., None])[..., 0]


def state_derivative(p: PhysicalParams, x: np.ndarray, tau) -> np.ndarray:
    """d/dt of the stacked state ``x[..., :] = (theta, phi, theta', phi')``."""
    th, ph, dth, dph = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    thdd, phdd = _closed_form(p, th, ph, dth, dph, tau)
    return np.stack([dth, dph, thdd, phdd], -1)


def total_energy(p: PhysicalParams, s):
    th, ph, dth, dph = _unpack(s)
    k_ball = 0.5 * p.I_b * dth**2 + 0.5 * p.m_b * (p.r_b * dth) ** 2
    k_body = (0.5 * p.m_B * (p.r_b**2 * dth**2
                             + 2.0 * p.r_b * p.l * (dth**2 + dth * dph) * np.cos(th + ph)
                             + p.l**2 * (dth + dph) ** 2)
              + 0.5 * p.I_B * (dth + dph) ** 2)
    v_body = p.m_B * p.g * p.l * np.cos(th + ph)
    return k_ball + k_body + v_body


def linearize(p: PhysicalParams) -> LinearModel:
    """Linear model about the upright equilibrium, state (theta, phi, theta', phi').

    The entries follow from differentiating the closed-form accelerations at
    the origin; ``h`` is -det M there and is negative for physical parameters.
    """
    h = p.upright_det
    if abs(h) <= EPS_SING:
        raise SingularMass(f"upright determinant {h:.3g} is singular")
    f = p.gamma2 + p.coupling
    gg = p.gamma1 + 2.0 * p.coupling
    mgl = p.m_B * p.g * p.l
    row3_grav = p.m_B**2 * p.l**2 * p.g * p.r_b / h
    row4_grav = mgl * (f - gg) / h
    a = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [row3_grav, row3_grav, p.mu_theta * p.gamma2 / h, -p.mu_phi * f / h],
        [row4_grav, row4_grav, -p.mu_theta * f / h, p.mu_phi * gg / h],
    ])
    b = np.array([[0.0], [0.0], [f / h], [-gg / h]])
    return LinearModel(a=a, b=b, c=np.eye(4), d=np.zeros((4, 1)))
