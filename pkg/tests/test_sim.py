import json
import math

import numpy as np
import pytest

from flexlift.config import resolve
from flexlift.errors import UnavailableGroundTruth
from flexlift.estimator import new_estimator
from flexlift.sim import (COLUMNS, NoForce, SyntheticForce, VehicleState, World, initial_estimators,
                          lyapunov_trace, make_force_model, read_trial_csv, run_batch, run_trial, step,
                          write_json, write_trial_csv)

from conftest import static_config

M = 0.135
G = 9.81


def _pair():
    return [VehicleState(np.array([0.0, 0.0, 1.0]), np.zeros(3), np.zeros(3), M),
            VehicleState(np.array([0.7, 0.0, 1.0]), np.zeros(3), np.zeros(3), M)]


def test_hover_is_stationary():
    world = World(_pair(), NoForce())
    hover = np.array([0.0, 0.0, M * G])
    start = [v.p.copy() for v in world.vehicles]
    for _ in range(10000):
        step(world, 0.001, hover, hover)
    for v, p0 in zip(world.vehicles, start):
        np.testing.assert_allclose(v.p, p0, atol=1e-9)
        np.testing.assert_allclose(v.v, 0.0, atol=1e-9)
    assert world.t == pytest.approx(10.0)


def test_constant_push():
    world = World(_pair(), NoForce())
    u = np.array([0.135, 0.0, M * G])
    for _ in range(1000):
        world.step(0.001, u, u)
    for v in world.vehicles:
        assert v.v[0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(v.a_true, [1.0, 0.0, 0.0], atol=1e-12)


def test_divergence_marks_trial_failed():
    cfg = static_config(duration=5.0)
    rep, _ = run_trial(cfg, "pd", force_model=lambda *s: (np.array([50.0, 0, 0]), np.zeros(3)))
    assert not rep.success
    assert rep.failure.startswith("divergence")
    assert 0 < rep.steps < 500


def test_perfect_injection_matches_rod_free_loop():
    cfg = resolve({"scenario": {"name": "exp1"}, "duration": 10.0, "noise_sigma": 0.0})
    with_rod, _ = run_trial(cfg, "oracle")
    free, _ = run_trial(cfg, "pd", force_model=NoForce())
    for i in (1, 2):
        np.testing.assert_allclose(with_rod.block("p", i), free.block("p", i), atol=1e-4)


def test_zero_duration_trial():
    cfg = resolve({"duration": 0.0})
    est_in = initial_estimators(cfg, "adaptive-phib")
    rep, est_out = run_trial(cfg, "adaptive-phib", est_in)
    assert rep.steps == 0
    assert est_out is est_in
    assert math.isnan(rep.mean_error)


def test_statistics_recompute_from_records():
    cfg = resolve({"scenario": {"name": "exp1"}, "duration": 5.0})
    rep, _ = run_trial(cfg, "adaptive-phib")
    e = 0.5 * (np.linalg.norm(rep.block("e", 1), axis=1) + np.linalg.norm(rep.block("e", 2), axis=1))
    np.testing.assert_allclose(rep.column("err_avg"), e, rtol=1e-15)
    assert abs(rep.mean_error - e.mean()) < 1e-12
    assert abs(rep.std_error - e.std()) < 1e-12
    e_ref = rep.block("pd", 1) - rep.block("p", 1)
    np.testing.assert_allclose(rep.block("e", 1), e_ref, atol=1e-15)


def test_trials_are_deterministic_and_estimators_carry_over():
    cfg = resolve({"scenario": {"name": "exp1"}, "duration": 3.0, "seed": 4})
    a, est_a = run_trial(cfg, "adaptive-phi", trial=1)
    b, est_b = run_trial(cfg, "adaptive-phi", trial=1)
    np.testing.assert_array_equal(a.records, b.records)
    np.testing.assert_array_equal(est_a[0].W_hat, est_b[0].W_hat)
    c, est_c = run_trial(cfg, "adaptive-phi", est_a, trial=2)
    assert est_c[0].updates == est_a[0].updates + c.steps - 2
    other, _ = run_trial(cfg, "adaptive-phi", trial=2)
    assert not np.array_equal(other.records, a.records)


def test_static_reference_command_energy_settles():
    cfg = static_config(duration=60.0, scenario={"name": "custom", "params": {
        "duration": 60.0, "distance_amp": 0.0, "height_amp": 0.0, "speed": 0.0, "distance_mean": 0.7}})
    rep, _ = run_trial(cfg, "adaptive-phib")
    assert rep.success and rep.saturated_steps == 0
    u = np.hstack([rep.block("u", 1), rep.block("u", 2)])
    dev = u - u[-1]
    energy = [float(np.sum(dev[k:k + 1000] ** 2)) for k in range(0, 6000, 1000)]
    # no self-excited oscillation: the command energy about its final value
    # decays window after window
    assert all(b <= a for a, b in zip(energy, energy[1:]))
    assert energy[-1] < 1e-4 * energy[0]


def test_lyapunov_trace_needs_validation_mode():
    cfg = resolve({"duration": 0.5})
    rep, _ = run_trial(cfg, "adaptive-phib")
    with pytest.raises(UnavailableGroundTruth):
        lyapunov_trace(rep)
    val = resolve({"duration": 0.5, "validation": {"enabled": True}})
    pid, _ = run_trial(val, "pid-low")
    with pytest.raises(UnavailableGroundTruth):
        lyapunov_trace(pid)


def test_lyapunov_trace_zero_at_rest_with_true_weights():
    cfg = static_config(duration=2.0, validation={"enabled": True}, estimator={"delay_steps": 0})
    truth = make_force_model(cfg, "adaptive-phib")
    ests = []
    for w in truth.weights:
        e = new_estimator("physical", 3)
        ests.append(type(e)(w.copy(), e.P, e.lam, e.kind, e.order))
    rep, _ = run_trial(cfg, "adaptive-phib", ests, force_model=truth)
    tr = lyapunov_trace(rep)
    np.testing.assert_allclose(tr["total"], 0.0, atol=1e-20)


def test_validation_force_is_linear_in_features():
    cfg = resolve({"validation": {"enabled": True}, "duration": 1.0})
    f = make_force_model(cfg, "adaptive-phi")
    assert isinstance(f, SyntheticForce) and f.kind == "plane"
    p1, p2 = np.array([0, 0, 1.0]), np.array([0.1, 0.6, 1.1])
    v1, v2 = np.zeros(3), np.array([0.0, 0.1, 0.0])
    a1, a2 = f(p1, p2, v1, v2)
    f.weights = [2.0 * w for w in f.weights]
    b1, b2 = f(p1, p2, v1, v2)
    np.testing.assert_allclose(b1, 2 * a1)


def test_csv_and_json_round_trip(tmp_path):
    cfg = resolve({"scenario": {"name": "exp1"}, "duration": 1.0})
    rep, _ = run_trial(cfg, "adaptive-phib")
    path = tmp_path / "exp1_adaptive-phib_0.csv"
    write_trial_csv(rep, str(path))
    back = read_trial_csv(str(path))
    assert back.shape == (rep.steps, len(COLUMNS))
    assert np.array_equal(back, rep.records, equal_nan=True)
    write_json(rep.to_json(), str(tmp_path / "r.json"))
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["mean_error"] == rep.mean_error
    assert not any(p.name.startswith(".tmp") for p in tmp_path.iterdir())


def test_csv_rejects_foreign_columns(tmp_path):
    bad = tmp_path / "x.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trial_csv(str(bad))


def test_single_trial_batch_equals_trial():
    cfg = resolve({"scenario": {"name": "exp1"}, "duration": 2.0, "trials": 1, "methods": ["pid-low"]})
    batch = run_batch(cfg)
    rep, _ = run_trial(cfg, "pid-low")
    s = batch.summary()["methods"]["pid-low"]
    assert s["trial_means"] == [rep.mean_error]
    assert s["final_mean"] == s["overall_mean"] == rep.mean_error
    assert s["trial_stds"] == [rep.std_error]
