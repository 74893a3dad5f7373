import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexlift.control import Gains, ThrustLag, adaptive_control, pid_control, saturate
from flexlift.sim import SyntheticForce, VehicleState, World, run_trial
from flexlift.trajectory import TrajectoryPoint

from conftest import static_config

M = 0.135
G = 9.81
HOVER = np.array([0.0, 0.0, M * G])


def _at(p, v=(0, 0, 0)):
    return VehicleState(np.array(p, float), np.array(v, float), np.zeros(3), M)


def _ref(p, v=(0, 0, 0), a=(0, 0, 0)):
    return TrajectoryPoint(np.array(p, float), np.array(v, float), np.array(a, float))


def test_adaptive_hover():
    cmd = adaptive_control(_at([1, 2, 3]), _ref([1, 2, 3]), np.zeros(3), Gains(4.0, 1.2), M)
    np.testing.assert_allclose(cmd.u, HOVER, atol=1e-15)
    assert not cmd.saturated


def test_adaptive_proportional_term():
    g = Gains(8.0, 1.2)
    cmd = adaptive_control(_at([0, 0, 0]), _ref([0.1, 0, 0]), np.zeros(3), g, M)
    np.testing.assert_allclose(cmd.u - HOVER, [0.8, 0, 0], atol=1e-15)


def test_adaptive_cancels_estimated_force():
    f = np.array([0.1, -0.2, 0.3])
    cmd = adaptive_control(_at([0, 0, 0]), _ref([0, 0, 0], a=[1, 0, 0]), f, Gains(4.0, 1.2), M)
    np.testing.assert_allclose(cmd.u, HOVER + [M, 0, 0] - f, atol=1e-15)
    np.testing.assert_array_equal(cmd.f_hat_o, f)


def test_pid_hover_keeps_integral_zero():
    integral = np.zeros(3)
    g = Gains(4.0, 1.2, 0.4, i_max=2.0)
    for _ in range(100):
        cmd, integral = pid_control(_at([0, 0, 1]), _ref([0, 0, 1]), integral, g, M, 0.01)
        np.testing.assert_allclose(cmd.u, HOVER, atol=1e-15)
    np.testing.assert_array_equal(integral, 0.0)


def test_pid_integral_clamped():
    g = Gains(4.0, 1.2, 0.4, i_max=0.05)
    integral = np.zeros(3)
    for _ in range(1000):
        _, integral = pid_control(_at([0, 0, 0]), _ref([1, -1, 0]), integral, g, M, 0.01)
    np.testing.assert_allclose(integral, [0.05, -0.05, 0.0])


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(0.1, 10))
def test_saturation_preserves_direction(u, u_max):
    u = np.array(u)
    out, sat = saturate(u, u_max)
    assert np.linalg.norm(out) <= u_max * (1 + 1e-12)
    assert sat == (np.linalg.norm(u) > u_max)
    if np.linalg.norm(u) > 0:
        np.testing.assert_allclose(np.cross(out, u), 0.0, atol=1e-9 * max(1.0, np.linalg.norm(u)) ** 2)
        assert out @ u >= 0


@pytest.mark.parametrize("gains,adaptive,word", [
    (Gains(-1.0, 1.0), True, "k_p"),
    (Gains(4.0, 0.25), True, "k_d"),
    (Gains(4.0, -1.0), False, "k_d"),
    (Gains(4.0, 1.0, k_i=-0.1), False, "k_i"),
    (Gains(4.0, 1.0, u_max=1.0), True, "u_max"),
    (Gains(4.0, 1.0, i_max=0.0), False, "i_max"),
])
def test_gain_validation(gains, adaptive, word):
    with pytest.raises(ValueError, match=word):
        gains.validate(M, adaptive=adaptive)


def test_gain_bound_is_exclusive():
    Gains(4.0, 0.2501).validate(M)
    Gains(4.0, 0.1).validate(M, adaptive=False)


def test_thrust_lag():
    lag = ThrustLag(0.03)
    np.testing.assert_array_equal(lag(np.ones(3), 0.001), np.ones(3))
    out = lag(np.zeros(3), 0.001)
    np.testing.assert_allclose(out, np.full(3, 0.03 / 0.031))
    np.testing.assert_array_equal(ThrustLag(0.0)(np.full(3, 2.0), 0.01), np.full(3, 2.0))


def test_pid_rejects_constant_disturbance():
    # closed form: with a constant external force -d the equilibrium needs
    # k_i * integral = d and zero position error
    d = np.array([0.05, -0.03, 0.08])
    g = Gains(4.0, 1.2, 0.8, i_max=2.0)
    world = World([_at([0, 0, 1]), _at([1, 0, 1])], lambda *s: (-d, -d))
    refs = [_ref([0, 0, 1]), _ref([1, 0, 1])]
    integral = [np.zeros(3), np.zeros(3)]
    for _ in range(6000):
        u = []
        for i in range(2):
            cmd, integral[i] = pid_control(world.vehicles[i], refs[i], integral[i], g, M, 0.01)
            u.append(cmd.u)
        for _ in range(10):
            world.step(0.001, *u)
    for i in range(2):
        np.testing.assert_allclose(g.k_i * integral[i], d, atol=1e-4)
        np.testing.assert_allclose(world.vehicles[i].p, refs[i].p_d, atol=1e-4)


def _error_dynamics_oracle(e0, k_p, k_d, m, dt, n):
    """Exact discrete solution of m e'' = -k_d e' - k_p e under semi-implicit Euler."""
    A = np.array([[1.0 - dt * dt * k_p / m, dt * (1.0 - dt * k_d / m)],
                  [-dt * k_p / m, 1.0 - dt * k_d / m]])
    out = np.empty((n, len(e0)))
    x = np.vstack([e0, np.zeros(len(e0))])
    for k in range(n):
        out[k] = x[0]
        x = A @ x
    return out


def _analytic(e0, k_p, k_d, m, t):
    zeta_w = k_d / (2 * m)
    wd = math.sqrt(k_p / m - zeta_w ** 2)
    return np.outer(np.exp(-zeta_w * t) * (np.cos(wd * t) + zeta_w / wd * np.sin(wd * t)), e0)


@pytest.mark.parametrize("dt", [1e-3, 5e-4])
def test_perfect_estimate_gives_linear_error_dynamics(dt):
    # synthetic strip force injected exactly at every physics step: the
    # closed loop reduces to m e'' = -k_d e' - k_p e
    offset = np.array([0.05, -0.04, 0.03])
    cfg = static_config(duration=5.0, dt_physics=dt, dt_control=dt, initial_error=offset.tolist())
    force = SyntheticForce.random("physical", 3, 0.1, 1)
    rep, _ = run_trial(cfg, "oracle", force_model=force)
    e = rep.block("e", 1)
    g = cfg.gains["oracle"]
    ref = _error_dynamics_oracle(-offset, g.k_p, g.k_d, M, dt, rep.steps)
    np.testing.assert_allclose(e, ref, atol=1e-9)
    t = rep.column("t")
    gap = np.max(np.abs(e - _analytic(-offset, g.k_p, g.k_d, M, t)))
    # first-order integrator: deviation from the continuous solution ~ dt
    assert gap < 1.0 * dt
