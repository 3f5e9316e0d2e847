import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ballbot_rl.dynamics import (PhysicalParams, PlanarState, coriolis, damping, forward_dynamics,
                                 forward_dynamics_solve, gravity, linearize, mass_matrix,
                                 state_derivative, total_energy)
from ballbot_rl.errors import SingularMass

P = PhysicalParams()

# Reference values from a symbolic Euler-Lagrange derivation of the energies
# (sympy, 30 digits), computed independently of this package.
M_03 = [[3.92432302956058177885661781847, 3.25856151478029088942830890923],
        [3.25856151478029088942830890923, 2.8]]
C_03 = [-0.567398796789771984202215831715, 0.0]
G_01 = -3.91746326922153669651938914563
QDD_REF = [-21.8012305306882206494501642694, 28.1283865664386463957001217081]
E_REF = 38.8270133005584853374333102048
A_REF = [[0, 0, 1, 0], [0, 0, 0, 1],
         [-53.8517840805123513266239707228, -53.8517840805123513266239707228,
          -0.400274473924977127172918572736, 0.468892955169258920402561756633],
         [77.0978042086001829826166514181, 77.0978042086001829826166514181,
          0.468892955169258920402561756633, -0.567131747483989021043000914913]]
B_REF = [0, 0, -9.37785910338517840805123513266, 11.3426349496797804208600182983]
S_REF = PlanarState(0.05, 0.1, 0.2, -0.1)


def random_params(rng):
    return PhysicalParams(m_b=rng.uniform(1, 6), m_B=rng.uniform(4, 20), I_b=rng.uniform(0.005, 0.1),
                          I_B=rng.uniform(0.3, 3), r_b=rng.uniform(0.08, 0.2), l=rng.uniform(0.2, 0.8),
                          mu_theta=rng.uniform(0, 0.2), mu_phi=rng.uniform(0, 0.2))


def test_reference_matrices():
    np.testing.assert_allclose(mass_matrix(P, PlanarState(0.3, 0, 0, 0)), M_03, rtol=1e-14)
    # only the sum theta + phi matters
    np.testing.assert_allclose(mass_matrix(P, PlanarState(0.1, 0.2, 0, 0)), M_03, rtol=1e-14)
    np.testing.assert_allclose(coriolis(P, PlanarState(0.3, 0, 1, 1)), C_03, rtol=1e-14, atol=0)
    np.testing.assert_allclose(gravity(P, PlanarState(0.1, 0, 0, 0)), [G_01, G_01], rtol=1e-14)
    np.testing.assert_allclose(damping(P, S_REF), [0.05 * 0.2, 0.05 * -0.1], rtol=1e-15)


def test_upright_mass_matrix_is_symmetric_positive_definite():
    m = mass_matrix(P, PlanarState(0, 0, 0, 0))
    np.testing.assert_array_equal(m, m.T)
    assert np.all(np.linalg.eigvalsh(m) > 0)


def test_forward_dynamics_reference():
    np.testing.assert_allclose(forward_dynamics(P, S_REF, 1.5), QDD_REF, rtol=1e-13)


def test_total_energy_reference():
    assert total_energy(P, S_REF) == pytest.approx(E_REF, rel=1e-14)


def test_gravity_drives_tilted_body_further():
    # no input, static, leaning forward: the lean accelerates away from upright
    qdd = forward_dynamics(P, PlanarState(0.0, 0.1, 0.0, 0.0), 0.0)
    assert qdd[0] + qdd[1] > 0


def test_upright_rest_is_equilibrium():
    np.testing.assert_array_equal(forward_dynamics(P, PlanarState(0, 0, 0, 0), 0.0), [0.0, 0.0])


def test_closed_form_matches_matrix_solve_batch():
    rng = np.random.default_rng(3)
    x = np.column_stack([rng.uniform(-1, 1, 1000), rng.uniform(-1.2, 1.2, 1000),
                         rng.normal(0, 3, 1000), rng.normal(0, 3, 1000)])
    tau = rng.normal(0, 5, 1000)
    a = forward_dynamics(P, x, tau)
    b = forward_dynamics_solve(P, x, tau)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10 * np.abs(b).max())


def test_state_derivative_layout():
    x = S_REF.as_array()
    d = state_derivative(P, x, 1.5)
    np.testing.assert_allclose(d[:2], x[2:])
    np.testing.assert_allclose(d[2:], QDD_REF, rtol=1e-13)


def test_linearize_reference():
    m = linearize(P)
    np.testing.assert_allclose(m.a, A_REF, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(m.b.reshape(-1), B_REF, rtol=1e-13, atol=1e-14)
    # gravity columns are identical
    assert m.a[2, 0] == m.a[2, 1] and m.a[3, 0] == m.a[3, 1]
    np.testing.assert_array_equal(m.c, np.eye(4))
    np.testing.assert_array_equal(m.d, np.zeros((4, 1)))


def _fd_jacobian(p, h=1e-6):
    a = np.zeros((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        a[:, j] = (state_derivative(p, e, 0.0) - state_derivative(p, -e, 0.0)) / (2 * h)
    b = (state_derivative(p, np.zeros(4), h) - state_derivative(p, np.zeros(4), -h)) / (2 * h)
    return a, b


@pytest.mark.parametrize("seed", range(5))
def test_linearize_matches_finite_differences(seed):
    p = P if seed == 0 else random_params(np.random.default_rng(seed))
    a_fd, b_fd = _fd_jacobian(p)
    m = linearize(p)
    np.testing.assert_allclose(m.a[2:], a_fd[2:], rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(m.b.reshape(-1)[2:], b_fd[2:], rtol=1e-6)


def test_ball_damping_entry_uses_body_mass():
    # the (phi-ddot, theta-dot) entry scales with m_B r_b l, not m_b r_b l
    p = PhysicalParams(m_b=1.0, m_B=20.0)
    a_fd, _ = _fd_jacobian(p)
    f = p.gamma2 + p.m_B * p.r_b * p.l
    assert linearize(p).a[3, 2] == pytest.approx(-p.mu_theta * f / p.upright_det, rel=1e-12)
    assert linearize(p).a[3, 2] == pytest.approx(a_fd[3, 2], rel=1e-6)


def test_singular_mass_matrix_raises():
    # vanishing ball mass and inertias make det M ~ 0 at zero lean
    p = PhysicalParams(m_b=1e-14, I_b=1e-14, I_B=1e-14, mu_theta=0.0, mu_phi=0.0)
    with pytest.raises(SingularMass):
        forward_dynamics(p, PlanarState(0, 0, 0, 0), 0.0)
    with pytest.raises(SingularMass):
        linearize(p)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        PhysicalParams(m_B=-1.0)
    with pytest.raises(ValueError):
        PhysicalParams(l=float("nan"))


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(-20, 20))
def test_equation_of_motion_residual(th, ph, dth, dph, tau):
    s = PlanarState(th, ph, dth, dph)
    qdd = forward_dynamics(P, s, tau)
    lhs = mass_matrix(P, s) @ qdd + coriolis(P, s) + gravity(P, s) + damping(P, s)
    np.testing.assert_allclose(lhs, [0.0, tau], atol=1e-9 * (1 + abs(tau) + np.abs(qdd).max()))


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-5, 5), st.floats(-5, 5))
def test_energy_rate_equals_power(lean, dth, dph):
    # dE/dt = tau * phi' - mu_theta theta'^2 - mu_phi phi'^2
    tau = 0.7
    s = PlanarState(lean, 0.0, dth, dph)
    x = s.as_array()
    dx = state_derivative(P, x, tau)
    h = 1e-6
    de = (total_energy(P, x + h * dx) - total_energy(P, x - h * dx)) / (2 * h)
    power = tau * dph - P.mu_theta * dth ** 2 - P.mu_phi * dph ** 2
    assert de == pytest.approx(power, abs=1e-5 * (1 + abs(power)))


def test_mass_matrix_determinant_matches_helper():
    for lean in (0.0, 0.4, -1.0):
        m = mass_matrix(P, PlanarState(lean, 0, 0, 0))
        x = P.coupling * math.cos(lean)
        c = P.gamma2 ** 2 - P.gamma1 * P.gamma2 + x ** 2
        assert np.linalg.det(m) == pytest.approx(-c, rel=1e-12)
