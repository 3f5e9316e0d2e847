import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ballbot_rl.dynamics import PhysicalParams, PlanarState, total_energy
from ballbot_rl.errors import NonFinite
from ballbot_rl.compound import ActionLimits, LinearPolicy
from ballbot_rl.dynamics import linearize
from ballbot_rl.linctl import LqrWeights, design_lqr
from ballbot_rl.sim import (FALLEN, LOG_COLUMNS, RECOVERED, BallbotState3D, BodyAttitude,
                            ContactEnvelope, EpisodeLog, EpisodeMonitor, SimConfig,
                            actuation_effectiveness, effectiveness_arrays, initial_states,
                            planar_to_tilt, rk4, rk4_step, run_episode, simulate, tilt_arrays,
                            tilt_to_planar, virtual_to_wheel_speeds, wheel_matrix, zero_controller)

P = PhysicalParams()
ENV = ContactEnvelope()
CFG = SimConfig()
LQR = design_lqr(linearize(P), LqrWeights())


# -- attitude -------------------------------------------------------------------

def test_tilt_reference_point():
    # explicit Rz(pi/3) Ry(0.2) (0, 0, 1) projected with atan2, 30 digits
    phi_x, phi_y = tilt_to_planar(BodyAttitude(math.pi / 3, 0.2))
    assert phi_x == pytest.approx(0.101010073458161285723328068681, abs=1e-15)
    assert phi_y == pytest.approx(0.173781252682428521741124551027, abs=1e-15)


def test_tilt_trivial_cases():
    assert tilt_to_planar(BodyAttitude(1.234, 0.0)) == (0.0, 0.0)
    px, py = tilt_to_planar(BodyAttitude(0.0, 0.3))
    assert px == pytest.approx(0.3, abs=1e-15) and py == 0.0
    att = planar_to_tilt(0.0, 0.0)
    assert att.beta == 0.0 and att.alpha == 0.0
    att = planar_to_tilt(0.3, 0.0)
    assert att.alpha == 0.0 and att.beta == pytest.approx(0.3, abs=1e-15)
    np.testing.assert_array_equal(BodyAttitude(2.0, 0.0).z_axis, [0.0, 0.0, 1.0])


def test_tilt_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        att = BodyAttitude(rng.uniform(0, 2 * math.pi), rng.uniform(1e-3, 1.4))
        back = planar_to_tilt(*tilt_to_planar(att))
        assert back.beta == pytest.approx(att.beta, abs=1e-12)
        d = (back.alpha - att.alpha + math.pi) % (2 * math.pi) - math.pi
        assert abs(d) < 1e-12
        assert np.linalg.norm(att.z_axis) == pytest.approx(1.0, abs=1e-12)


def test_tilt_arrays_z_matches_attitude():
    rng = np.random.default_rng(1)
    a = rng.uniform(0, 2 * math.pi, 50)
    b = rng.uniform(0, 1.2, 50)
    px, py = np.array([tilt_to_planar(BodyAttitude(x, y)) for x, y in zip(a, b)]).T
    _, beta, z = tilt_arrays(px, py)
    np.testing.assert_allclose(beta, b, atol=1e-12)
    np.testing.assert_allclose(z, [BodyAttitude(x, y).z_axis for x, y in zip(a, b)], atol=1e-12)


def test_beta_out_of_range_rejected():
    with pytest.raises(ValueError):
        BodyAttitude(0.0, math.pi / 2)
    with pytest.raises(ValueError):
        BodyAttitude(0.0, -0.1)


def test_state3d_cos_relation_small_angle():
    # cos(beta) = cos(phi_x) cos(phi_y) holds only to leading order; the
    # exact relation used here is tan^2(beta) = tan^2(phi_x) + tan^2(phi_y)
    s = BallbotState3D(PlanarState(0.0, 0.03), PlanarState(0.0, -0.02))
    b = s.attitude.beta
    assert math.tan(b) ** 2 == pytest.approx(math.tan(0.03) ** 2 + math.tan(0.02) ** 2, rel=1e-12)
    assert math.cos(b) == pytest.approx(math.cos(0.03) * math.cos(0.02), abs=1e-6)


# -- wheels ---------------------------------------------------------------------

def test_wheel_speeds():
    np.testing.assert_array_equal(virtual_to_wheel_speeds(0.0, 0.0), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(virtual_to_wheel_speeds(0.0, 1.0), [1.0, -0.5, -0.5], atol=1e-15)


def test_wheel_speeds_pseudo_inverse():
    rng = np.random.default_rng(2)
    w = wheel_matrix(ENV.wheel_alphas)
    pinv = np.linalg.pinv(w)
    for v in rng.normal(size=(100, 2)):
        np.testing.assert_allclose(pinv @ virtual_to_wheel_speeds(*v), v, atol=1e-12)


def test_wheel_speeds_sum_to_zero_for_symmetric_wheels():
    rng = np.random.default_rng(4)
    for v in rng.normal(size=(20, 2)):
        assert abs(virtual_to_wheel_speeds(*v).sum()) < 1e-12


# -- contact envelope -------------------------------------------------------------

def test_effectiveness_reference_points():
    assert actuation_effectiveness(ENV, BodyAttitude(1.0, 0.0)) == 1.0
    assert actuation_effectiveness(ENV, BodyAttitude.from_degrees(90, 12)) == 0.0
    assert actuation_effectiveness(ENV, BodyAttitude.from_degrees(30, 12)) > 0.0
    # direct evaluation of the documented formula at alpha = 30 deg (w = 1)
    s = (12 - 10) / (14 - 10)
    assert actuation_effectiveness(ENV, BodyAttitude.from_degrees(30, 12)) == pytest.approx(
        0.5 * (1 + math.cos(math.pi * s)), abs=1e-12)


def test_effectiveness_thresholds():
    for a in np.radians([0, 30, 45, 90, 200, 330]):
        assert effectiveness_arrays(ENV, a, ENV.beta_full(a) * (1 - 1e-9)) == 1.0
        assert effectiveness_arrays(ENV, a, ENV.beta_zero(a)) == 0.0
        assert effectiveness_arrays(ENV, a, ENV.beta_zero(a) + 0.1) == 0.0


def test_effectiveness_period():
    a = np.linspace(0, 2 * math.pi, 97)
    b = np.radians(10.0)
    np.testing.assert_allclose(effectiveness_arrays(ENV, a, b),
                               effectiveness_arrays(ENV, a + 2 * math.pi / 3, b), atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0, 0.5), st.floats(0, 0.5))
def test_effectiveness_monotone_and_bounded(alpha, b1, b2):
    lo, hi = sorted((b1, b2))
    e_lo = effectiveness_arrays(ENV, alpha, lo)
    e_hi = effectiveness_arrays(ENV, alpha, hi)
    assert 0.0 <= e_hi <= e_lo <= 1.0


def test_envelope_validation():
    with pytest.raises(ValueError):
        ContactEnvelope(beta_full_on=math.radians(10), beta_zero_on=math.radians(9))
    with pytest.raises(ValueError):
        ContactEnvelope(wheel_alphas=(0.0, 2.0, 4.0))
    with pytest.raises(ValueError):
        ContactEnvelope(sharpness=0.0)


# -- integration ----------------------------------------------------------------

def test_rk4_equilibrium_is_fixed():
    for dt in (1e-4, 1e-3, 0.05):
        assert rk4_step(P, PlanarState(), 0.0, dt) == PlanarState(0.0, 0.0, 0.0, 0.0)


def test_rk4_dt_bounds():
    with pytest.raises(ValueError):
        rk4_step(P, PlanarState(), 0.0, 0.0)
    with pytest.raises(ValueError):
        rk4_step(P, PlanarState(), 0.0, 0.051)


def test_rk4_nonfinite_raises():
    with pytest.raises(NonFinite):
        rk4_step(P, PlanarState(0.0, 0.0, float("inf"), 0.0), 0.0, 1e-3)


def test_unforced_body_falls():
    s = PlanarState(0.0, 0.1, 0.0, 0.0)
    for _ in range(100):
        s = rk4_step(P, s, 0.0, 1e-3)
    assert s.lean > 0.1 and s.theta_dot + s.phi_dot > 0


def _integrate(dt, t_end=1.0):
    x = np.array([0.0, 0.2, 0.3, -0.1])
    for _ in range(int(round(t_end / dt))):
        x = rk4(P, x, 0.5, dt)
    return x


def test_rk4_fourth_order_convergence():
    a, b, c = _integrate(0.02), _integrate(0.01), _integrate(0.005)
    ratio = np.linalg.norm(a - b) / np.linalg.norm(b - c)
    assert math.log2(ratio) >= 3.8


def test_energy_conserved_without_damping_or_input():
    p = PhysicalParams(mu_theta=0.0, mu_phi=0.0)
    x = np.array([0.0, 0.2, 0.0, 0.0])
    e0 = total_energy(p, x)
    for _ in range(5000):
        x = rk4(p, x, 0.0, 1e-3)
    assert abs(total_energy(p, x) - e0) / abs(e0) < 1e-6


# -- monitor and episodes ---------------------------------------------------------

def test_monitor_hold_timer_scripted():
    cfg = SimConfig(dt=0.05, horizon=5.0, t_hold=0.15)  # hold_steps = 3
    m = EpisodeMonitor(cfg)
    lo, hi = math.radians(0.5), math.radians(1.5)
    # inside twice, out once (reset), then inside until the hold completes
    seq = [lo, lo, hi, lo, lo, lo, lo]
    out = [int(m.update(np.array([b]))[0]) for b in seq]
    assert out == [0, 0, 0, 0, 0, 0, RECOVERED]
    assert int(m.update(np.array([math.radians(26.0)]))[0]) == FALLEN


def test_zero_controller_at_upright_recovers():
    ep = run_episode(P, CFG, ENV, zero_controller(), BodyAttitude(0.0, 0.0))
    assert ep.recovered and ep.status == "recovered"
    assert ep.column("beta_deg").max() < 1e-9
    assert ep.end_time == pytest.approx(CFG.horizon)


def test_zero_controller_falls_from_20_degrees():
    ep = run_episode(P, CFG, ENV, zero_controller(), BodyAttitude.from_degrees(45, 20))
    assert not ep.recovered and ep.fallen
    assert ep.end_time < CFG.horizon


def test_linear_controller_recovers_from_3_degrees():
    ep = run_episode(P, CFG, ENV, LinearPolicy(LQR, ActionLimits()), BodyAttitude.from_degrees(0, 3))
    assert ep.recovered
    assert ep.column("beta_deg")[-1] < 1.0


def test_episode_log_columns_and_csv_round_trip():
    ep = run_episode(P, SimConfig(horizon=0.05), ENV, LinearPolicy(LQR, ActionLimits()),
                     BodyAttitude.from_degrees(40, 4))
    text = ep.to_csv()
    assert text.splitlines()[0] == ",".join(LOG_COLUMNS)
    assert EpisodeLog.rows_from_csv(text) == [tuple(map(float, r)) for r in ep.rows]
    assert len(ep.rows) == 51
    assert ep.rows[0][5] == pytest.approx(4.0, abs=1e-12)


def test_episodes_are_deterministic():
    ctl = LinearPolicy(LQR, ActionLimits())
    a = run_episode(P, CFG, ENV, ctl, BodyAttitude.from_degrees(210, 7), rng_seed=5)
    b = run_episode(P, CFG, ENV, ctl, BodyAttitude.from_degrees(210, 7), rng_seed=5)
    assert a.to_csv() == b.to_csv() and a.status == b.status


def test_planes_decouple_without_envelope():
    x0 = np.zeros((1, 2, 4))
    x0[0, 0, 1] = 0.05
    res, rows = simulate(P, CFG, ENV, LinearPolicy(LQR, ActionLimits()), x0, record=True,
                         stop_on_recovery=False, effectiveness=False)
    assert np.all(res.final_x[0, 1] == 0.0)
    assert all(r[2] == 0.0 and r[4] == 0.0 for r in rows[0])


def test_nonfinite_episode_is_reported_not_raised():
    bad = lambda x: np.full((x.shape[0], 2), np.inf)
    res, _ = simulate(P, CFG, ENV, bad, initial_states([0.0], [0.01]))
    assert res.status[0] == FALLEN and res.error[0].startswith("NonFinite")


def test_batch_matches_single_runs():
    alphas = np.radians([0, 50, 210])
    betas = np.radians([3, 8, 7.5])
    ctl = LinearPolicy(LQR, ActionLimits())
    res, _ = simulate(P, CFG, ENV, ctl, initial_states(alphas, betas))
    for i in range(3):
        one, _ = simulate(P, CFG, ENV, ctl, initial_states(alphas[i], betas[i]))
        assert one.status[0] == res.status[i] and one.end_step[0] == res.end_step[i]
        np.testing.assert_array_equal(one.final_x[0], res.final_x[i])


def test_initial_states_match_tilt_projection():
    x = initial_states(math.pi / 3, 0.2)
    px, py = tilt_to_planar(BodyAttitude(math.pi / 3, 0.2))
    assert x[0, 0, 1] == px and x[0, 1, 1] == py
    assert np.all(x[0, :, [0, 2, 3]] == 0.0)
