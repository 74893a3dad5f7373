import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from flexlift.errors import DistanceBoundViolation, PhaseOutOfRange
from flexlift.estimator import excitation_metric, regressor
from flexlift.trajectory import (DEFAULT_EXCITATION, Blend, Const, Excitation, Formation, Linear, Sine,
                                 Step, Travel, Window, build_scenario, exp1_scenario, exp1_varying_distance,
                                 exp2_scenario, exp3_dual_window, exp3_scenario, superimpose_excitation)

H = 1e-4
SHIPPED = ["exp1", "exp2", "exp3"]


def _fd_check(sc, t, tol=1e-6):
    (a1, b1), (a0, b0), (a2, b2) = sc(t - H), sc(t), sc(t + H)
    for lo, mid, hi in ((a1, a0, a2), (b1, b0, b2)):
        np.testing.assert_allclose((hi.p_d - lo.p_d) / (2 * H), mid.v_d, atol=tol)
        np.testing.assert_allclose((hi.v_d - lo.v_d) / (2 * H), mid.a_d, atol=tol)


@pytest.mark.parametrize("name", SHIPPED)
@settings(max_examples=40, deadline=None)
@given(s=st.floats(0.0, 1.0))
def test_derivatives_match_finite_differences(name, s):
    sc = build_scenario(name)
    _fd_check(sc, H + s * (sc.duration - 2 * H))


def test_custom_scenario_derivatives():
    sc = build_scenario("custom", {"duration": 20.0, "yaw_rate": 0.3, "speed": 0.1,
                                   "excitation": [{"amp": 0.02, "freq": 0.7, "axis": [0, 0, 1], "vehicle": 1}]})
    for t in np.linspace(0.1, 19.9, 23):
        _fd_check(sc, t)


@given(st.floats(-3, 3), st.floats(0.05, 5), st.floats(-5, 5), st.floats(0.1, 3))
def test_signal_derivatives(a, T, t0, t):
    # quintic ramps jump in jerk at their ends; stay clear of those instants
    kinks = [t0 + k * T for k in range(4)]
    assume(min(abs(t - k) for k in kinks) > 2 * H)
    # central-difference truncation: H^2 / 6 times the fourth derivative
    tol = 1e-6 + H * H * 400.0 * (abs(a) + 1.0) / T ** 4
    for sig in (Step(a, -a, t0, T), Travel(a, 0.4, t0, t0 + 3 * T, T),
                Blend(Sine(0.3, 0.2, 1.0), Linear(a, 0.1), t0, T), Sine(a, 0.3) * Linear(1.0, 0.2)):
        x0, v, acc = sig(t)
        xp, vp, _ = sig(t + H)
        xm, vm, _ = sig(t - H)
        assert (xp - xm) / (2 * H) == pytest.approx(v, abs=tol)
        assert (vp - vm) / (2 * H) == pytest.approx(acc, abs=tol)


@pytest.mark.parametrize("name", SHIPPED)
def test_distance_within_strip_bounds(name):
    sc = build_scenario(name)
    d = np.array([sc.distance(t) for t in np.arange(0.0, sc.duration, 0.02)])
    assert d.min() >= 0.1 and d.max() <= 1.2 - 0.05


def test_exp1_distance_profile():
    sc = exp1_scenario()
    assert sc.distance(0.0) == pytest.approx(0.8, abs=1e-12)
    d = np.array([sc.distance(t) for t in np.linspace(0.0, 8.0, 801)])
    assert d.max() == pytest.approx(0.8, abs=1e-9)
    assert d.min() == pytest.approx(0.4, abs=1e-9)
    assert d[:-1].mean() == pytest.approx(0.6, abs=1e-9)


def test_exp1_height_swing_per_endpoint():
    sc = exp1_scenario()
    z = np.array([[p.p_d[2] for p in sc(t)] for t in np.arange(0, 40, 0.01)])
    np.testing.assert_allclose(z.max(axis=0) - 1.0, 0.05, atol=1e-3)
    np.testing.assert_allclose(z.min(axis=0) - 1.0, -0.05, atol=1e-3)


def test_exp1_function_form():
    a, b = exp1_varying_distance(3.0)
    a2, b2 = exp1_scenario()(3.0)
    np.testing.assert_array_equal(a.p_d, a2.p_d)


def test_exp2_phases():
    sc = exp2_scenario()
    t_climb = sc.phases["climb"][1]
    heights = [sc.formation.cz(t)[0] for t in np.arange(0, t_climb + 6, 0.01)]
    assert max(heights) == pytest.approx(1.8, abs=1e-12)
    for p in sc(t_climb):
        assert p.p_d[2] == pytest.approx(1.8, abs=1e-12)
    h0, h1 = sc.phases["hold"]
    assert h1 - h0 == pytest.approx(10.0)
    for t in np.linspace(h0, h1, 101):
        for p in sc(t):
            np.testing.assert_allclose(p.v_d, 0.0, atol=1e-12)
            np.testing.assert_allclose(p.a_d, 0.0, atol=1e-12)
    # distance held at 0.6 m from the descent to the end of the hold
    for t in np.linspace(sc.phases["descend"][0], h1, 50):
        assert sc.distance(t) == pytest.approx(0.6, abs=1e-9)
    assert 0.5 * (sc(h0)[0].p_d[2] + sc(h0)[1].p_d[2]) == pytest.approx(0.7)


def test_exp2_boundaries_are_smooth():
    sc = exp2_scenario()
    for name, (t0, t1) in sc.phases.items():
        for t in (t0, t1):
            if 1e-6 < t < sc.duration - 1e-6:
                for lo, hi in zip(sc(t - 1e-6), sc(t + 1e-6)):
                    assert np.max(np.abs(hi.v_d - lo.v_d)) < 1e-9


def test_out_of_range_time():
    sc = exp2_scenario()
    with pytest.raises(PhaseOutOfRange):
        sc(sc.duration + 0.1)
    with pytest.raises(PhaseOutOfRange):
        sc(-0.1)


def test_exp3_full_revolution():
    sc = exp3_scenario()
    t_pe = sc.phases["excitation"][1]
    assert sc.formation.yaw(t_pe)[0] - sc.formation.yaw(0.0)[0] == pytest.approx(2 * math.pi, abs=1e-12)
    heading = []
    for t in np.arange(0.0, t_pe + 1e-9, 0.05):
        a, b = sc(t)
        r = b.p_d - a.p_d
        heading.append(math.atan2(r[1], r[0]))
    assert np.unwrap(heading)[-1] - heading[0] == pytest.approx(2 * math.pi, abs=1e-9)


def test_exp3_distance_extremes():
    sc = exp3_scenario()
    d = np.array([sc.distance(t) for t in np.arange(0.0, sc.phases["excitation"][1], 0.005)])
    assert d.min() >= 0.4 - 1e-12 and d.max() <= 1.0 + 1e-12
    assert d.min() == pytest.approx(0.4, abs=5e-3)
    assert d.max() == pytest.approx(1.0, abs=5e-3)


@pytest.mark.parametrize("kind", ["plane", "physical"])
def test_exp3_first_phase_is_exciting(kind):
    sc = exp3_scenario()
    phis = []
    for t in np.arange(0.0, sc.phases["excitation"][1], 0.05):
        a, b = exp3_dual_window(t)
        phis.append(regressor(kind, 3, a.p_d, b.p_d, a.v_d, b.v_d)[0])
    assert excitation_metric(phis) > 0.0


def _line():
    return Formation(Linear(0.0, 0.1), Const(0.0), Const(1.0), Const(math.pi / 2), Const(0.7))


def test_zero_excitation_is_identity():
    base = _line()(2.0)
    out = superimpose_excitation(2.0, base, [Excitation(0.0, 0.5), Excitation(0.0, 1.3, (0, 0, 1), 1)])
    for a, b in zip(base, out):
        np.testing.assert_array_equal(a.p_d, b.p_d)
        np.testing.assert_array_equal(a.a_d, b.a_d)


def test_single_sine_on_x():
    A, f, t = 0.03, 0.7, 1.9
    w = 2 * math.pi * f
    base = _line()(t)
    out = superimpose_excitation(t, base, [Excitation(A, f)])
    for a, b in zip(base, out):
        np.testing.assert_allclose(b.p_d - a.p_d, [A * math.sin(w * t), 0, 0], atol=1e-15)
        np.testing.assert_allclose(b.a_d - a.a_d, [-A * w * w * math.sin(w * t), 0, 0], atol=1e-14)


def test_excitation_bound_violation():
    base = _line()(0.0)
    with pytest.raises(DistanceBoundViolation):
        superimpose_excitation(0.3, base, [Excitation(0.8, 0.5, (0, 1, 0), 1)], bounds=(0.1, 1.15))


def test_default_excitation_on_a_line():
    form = _line()
    for kind, floor in (("plane", 1e-8), ("physical", 1e-13)):
        phis = []
        for t in np.arange(0.0, 30.0, 0.05):
            a, b = superimpose_excitation(t, form(t), DEFAULT_EXCITATION)
            phis.append(regressor(kind, 2, a.p_d, b.p_d, a.v_d, b.v_d)[0])
        assert excitation_metric(phis) > floor
        if kind == "plane":
            bare = [regressor(kind, 2, a.p_d, b.p_d, a.v_d, b.v_d)[0] for a, b in (form(t) for t in np.arange(0, 30, 0.05))]
            assert excitation_metric(bare) < 1e-12


def test_formation_rejects_impossible_heights():
    form = Formation(Const(0), Const(0), Const(1), Const(0), Const(0.2), Const(0.0), Const(0.5))
    with pytest.raises(DistanceBoundViolation):
        form(0.0)


def test_windows():
    sq = Window("sq", 1.0, 0.0, 1.0, 0.6)
    assert sq.edge_distance(0.0, 1.0) == pytest.approx(0.3)
    assert sq.edge_distance(0.2, 1.25) == pytest.approx(0.05)
    assert not sq.inside(0.0, 1.31)
    circ = Window("c", 1.0, 0.0, 1.0, 0.6, "circle")
    assert circ.edge_distance(0.2, 1.2) == pytest.approx(0.3 - math.hypot(0.2, 0.2))
    far = np.array([[0.0, 0.0, 1.0], [0.5, 0.0, 1.0]])
    assert sq.margin(far) is None and sq.clearance(far) is None
    through = np.array([[0.5, 0.1, 1.0], [1.5, 0.1, 1.2]])
    assert sq.margin(through) == pytest.approx(0.2)
    assert sq.clearance(through) is True
    low = np.array([[0.5, 0.0, 0.5], [1.5, 0.0, 0.5]])
    assert sq.clearance(low) is False
    timed = Window("t", 0, 0, 0, 1, active=(10.0, 20.0))
    assert not timed.is_active(5.0) and timed.is_active(15.0)


def test_unknown_scenario():
    with pytest.raises(KeyError):
        build_scenario("exp9")
    assert build_scenario("WindowPass").name == "exp2"


def test_generators_are_pure():
    a = exp3_scenario({"speed": 0.2})
    b = exp3_scenario({"speed": 0.2})
    for t in (0.0, 33.3, 90.0):
        np.testing.assert_array_equal(a(t)[1].p_d, b(t)[1].p_d)
