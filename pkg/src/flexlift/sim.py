"""Fixed-step closed-loop simulation of two vehicles carrying the strip.

Physics runs at ``dt_physics`` (semi-implicit Euler on point masses), the
controllers and estimators at ``dt_control``. The force model coupling the
vehicles is either the elastica (:class:`RodForce`), a synthetic force that
is exactly linear in the chosen features (:class:`SyntheticForce`, used to
check the stability and consistency properties literally), or nothing.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import estimator as est
from .config import ADAPTIVE_METHODS, SimConfig
from .control import ThrustLag, adaptive_control, pid_control
from .errors import (DivergenceDetected, NoConvergence, SolverFailure, TautRod,
                     UnavailableGroundTruth)
from .rod import RodSolver, RodSpec
from .trajectory import Scenario

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
Z = np.array([0.0, 0.0, 1.0])


@dataclass
class VehicleState:
    p: np.ndarray
    v: np.ndarray
    a_true: np.ndarray
    m: float


# -- force models -----------------------------------------------------------

class NoForce:
    def __call__(self, p1, p2, v1, v2):
        return np.zeros(3), np.zeros(3)

    def polyline(self, p1, p2):
        return np.vstack([p1, p2])


class RodForce:
    """Elastica reactions, re-equilibrated on every call."""

    def __init__(self, spec: RodSpec):
        self.spec = spec
        self.solver = RodSolver(spec)

    def __call__(self, p1, p2, v1, v2):
        try:
            reac = self.solver.reaction(p1, p2, v2 - v1, with_energy=False)
        except NoConvergence as exc:
            raise SolverFailure(str(exc)) from exc
        return reac.f1, reac.f2

    def polyline(self, p1, p2):
        return self.solver.vertices()


class SyntheticForce:
    """Force exactly equal to ``R W_i^T phi`` for known weights ``W_i``."""

    def __init__(self, kind: str, order: int, weights):
        self.kind = kind
        self.order = order
        self.weights = [np.asarray(w, dtype=float) for w in weights]

    @classmethod
    def random(cls, kind: str, order: int, scale: float, seed: int):
        rng = np.random.default_rng(seed)
        size = 4 * order + 1
        return cls(kind, order, [scale * rng.standard_normal((size, 3)) for _ in range(2)])

    def __call__(self, p1, p2, v1, v2):
        phi, rot = est.regressor(self.kind, self.order, p1, p2, v1, v2)
        return rot @ (self.weights[0].T @ phi.values), rot @ (self.weights[1].T @ phi.values)

    def polyline(self, p1, p2):
        return np.vstack([p1, p2])


# -- world ------------------------------------------------------------------

class World:
    """Two point-mass vehicles coupled through a force model."""

    def __init__(self, vehicles, force_model, g: float = 9.81, limits=(100.0, 50.0)):
        self.vehicles = vehicles
        self.force_model = force_model
        self.g = g
        self.limits = limits
        self.t = 0.0
        self.u_applied = [np.array([0.0, 0.0, v.m * g]) for v in vehicles]
        self.last_force = [np.zeros(3), np.zeros(3)]
        self.force_state = None  # (p1, p2, v1, v2) at which last_force was evaluated

    def state_tuple(self):
        a, b = self.vehicles
        return a.p, b.p, a.v, b.v

    def step(self, dt: float, u1, u2) -> "World":
        """Advance by ``dt`` under commands ``u1``, ``u2`` (semi-implicit Euler).

        Raises
        ------
        SolverFailure
            The strip equilibrium could not be found.
        TautRod
            The vehicles pulled the strip beyond its length.
        DivergenceDetected
            Any position norm > 100 m or speed > 50 m/s.
        """
        a, b = self.vehicles
        state = (a.p.copy(), b.p.copy(), a.v.copy(), b.v.copy())
        f1, f2 = self.force_model(*state)
        self.force_state = state
        self.last_force = [f1, f2]
        self.u_applied = [u1, u2]
        for veh, u, f in ((a, u1, f1), (b, u2, f2)):
            acc = (u + f) / veh.m
            acc[2] -= self.g
            veh.a_true = acc
            veh.v = veh.v + dt * acc
            veh.p = veh.p + dt * veh.v
            pp, vv = float(veh.p @ veh.p), float(veh.v @ veh.v)
            if not (pp <= self.limits[0] ** 2 and vv <= self.limits[1] ** 2):
                raise DivergenceDetected(f"vehicle left the envelope at t={self.t + dt:.3f}: "
                                         f"p={veh.p}, v={veh.v}")
        self.t += dt
        return self


def step(world: World, dt: float, u1, u2) -> World:
    return world.step(dt, u1, u2)


# -- reports ----------------------------------------------------------------

COLUMNS = (["t"] + [f"{q}{i}{ax}" for q in ("p", "pd", "e", "u", "fo", "fhat", "ftrue", "eps")
                    for i in (1, 2) for ax in "xyz"]
           + ["Vp1", "Vp2", "VW1", "VW2", "err_avg"])


@dataclass
class TrialReport:
    scenario: str
    method: str
    trial: int
    records: np.ndarray  # rows follow COLUMNS
    success: bool = True
    failure: str = ""
    windows: dict = field(default_factory=dict)  # name -> passed (None if never reached)
    window_margins: dict = field(default_factory=dict)  # name -> smallest edge distance, m
    saturated_steps: int = 0
    max_du: float = 0.0
    phases: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    validation: bool = False

    def column(self, name: str) -> np.ndarray:
        return self.records[:, COLUMNS.index(name)]

    def block(self, prefix: str, i: int) -> np.ndarray:
        k = COLUMNS.index(f"{prefix}{i}x")
        return self.records[:, k:k + 3]

    @property
    def steps(self) -> int:
        return self.records.shape[0]

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.column("err_avg"))) if self.steps else float("nan")

    @property
    def std_error(self) -> float:
        return float(np.std(self.column("err_avg"))) if self.steps else float("nan")

    def phase_stats(self, t0: float, t1: float) -> tuple:
        t = self.column("t")
        sel = self.column("err_avg")[(t >= t0) & (t < t1)]
        if sel.size == 0:
            return float("nan"), float("nan")
        return float(np.mean(sel)), float(np.std(sel))

    def summary(self) -> dict:
        return {"scenario": self.scenario, "method": self.method, "trial": self.trial,
                "steps": self.steps, "mean_error": self.mean_error, "std_error": self.std_error,
                "success": self.success, "failure": self.failure, "windows": self.windows,
                "window_margins": self.window_margins,
                "saturated_steps": self.saturated_steps, "max_du": self.max_du,
                "phases": {k: {"mean": m, "std": s} for k, (m, s) in self.phases.items()}}

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **self.summary(), "snapshots": self.snapshots}


def _atomic_write(path: str, writer):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trial_csv(report: TrialReport, path: str):
    def w(fh):
        out = csv.writer(fh)
        out.writerow(COLUMNS)
        for row in report.records:
            out.writerow([repr(float(x)) for x in row])
    _atomic_write(path, w)


def write_json(obj, path: str):
    _atomic_write(path, lambda fh: json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True))


def read_trial_csv(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != tuple(COLUMNS):
        raise ValueError(f"{path}: unexpected columns")
    return np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(COLUMNS))


# -- trials -----------------------------------------------------------------

def make_force_model(config: SimConfig, method: Optional[str] = None):
    if config.validation:
        kind = ADAPTIVE_METHODS.get(method, "physical")
        v = config["validation"]
        return SyntheticForce.random(kind, config["estimator"]["order"], v["weight_scale"], v["seed"])
    return RodForce(config.rod)


def initial_estimators(config: SimConfig, method: str):
    if method not in ADAPTIVE_METHODS:
        return None
    e = config["estimator"]
    return [est.new_estimator(ADAPTIVE_METHODS[method], e["order"], e["lambda"], e["p0"], e["scheme"])
            for _ in range(2)]


def _vp(m, k_p, e, e_dot) -> float:
    return 0.5 * m * float(e_dot @ e_dot) + 0.5 * k_p * float(e @ e)


def run_trial(config: SimConfig, method: str, estimators=None, trial: int = 0,
              force_model=None, on_step=None):
    """Fly the scenario once with ``method``.

    Returns ``(report, estimators_out)``. Adaptive estimators are carried in
    and out so learning persists across trials; other methods pass ``None``
    through. Divergence or over-stretching the strip marks the trial failed
    and truncates the records; a rod solver failure propagates.
    """
    sc: Scenario = config.scenario
    m, g = config.mass, float(config["gravity"])
    dtc = float(config["dt_control"])
    nsub = config.substeps
    dtp = dtc / nsub
    steps = int(round(config.duration / dtc))
    adaptive = method in ADAPTIVE_METHODS
    if adaptive and estimators is None:
        estimators = initial_estimators(config, method)
    gains = config.gains[method]
    if force_model is None:
        force_model = make_force_model(config, method)
    validation = isinstance(force_model, SyntheticForce)
    e_cfg = config["estimator"]
    delay = int(e_cfg["delay_steps"])
    snap_every = max(1, int(round(e_cfg["snapshot_interval"] / dtc)))

    report = TrialReport(sc.name, method, trial, np.zeros((0, len(COLUMNS))), validation=validation)
    if steps == 0:
        return report, estimators

    ss = np.random.SeedSequence([int(config["seed"]), int(trial)])
    rng = np.random.default_rng(ss)
    sigma = float(config["noise_sigma"])

    r1, r2 = sc(0.0)
    offset = np.asarray(config["initial_error"], dtype=float)
    vehicles = [VehicleState(r.p_d + offset, r.v_d.copy(), np.zeros(3), m) for r in (r1, r2)]
    world = World(vehicles, force_model, g, (config["divergence"]["position"], config["divergence"]["velocity"]))
    lags = [ThrustLag(float(config["thrust_lag"])) for _ in range(2)]
    integral = [np.zeros(3), np.zeros(3)]
    pending = None  # observation awaiting a delayed update
    rows = []
    prev_u = None
    margins = {w.name: None for w in sc.windows}
    oracle = method == "oracle"

    try:
        for k in range(steps):
            t = k * dtc
            refs = sc(t)
            veh = world.vehicles
            fo = [np.full(3, np.nan), np.full(3, np.nan)]
            ftrue = [np.full(3, np.nan), np.full(3, np.nan)]
            eps = [np.full(3, np.nan), np.full(3, np.nan)]
            if k > 0:
                ftrue = [f.copy() for f in world.last_force]
                meas = [v.a_true + (sigma * rng.standard_normal(3) if sigma > 0 else 0.0) for v in veh]
                fo = [est.observe_force(m, meas[i], world.u_applied[i], t, g).f_o for i in range(2)]
            if adaptive and k > 0:
                phi_o, rot_o = est.regressor(estimators[0].kind, estimators[0].order, *_as_p1p2v1v2(world.force_state))
                obs = (phi_o, rot_o, fo)
                if delay == 0:
                    todo, pending = obs, None
                else:
                    todo, pending = pending, obs
                if todo is not None:
                    phi_u, rot_u, fo_u = todo
                    estimators = [est.rls_step(estimators[i], phi_u, rot_u.T @ fo_u[i], dtc) for i in range(2)]
                    eps = [estimators[i].innovation for i in range(2)]

            p1, p2 = veh[0].p, veh[1].p
            if adaptive:
                phi, rot = est.regressor(estimators[0].kind, estimators[0].order, p1, p2, veh[0].v, veh[1].v)
                fhat = [est.predict_force(estimators[i], phi, rot) for i in range(2)]
            elif oracle:
                fhat = list(force_model(p1.copy(), p2.copy(), veh[0].v.copy(), veh[1].v.copy()))
            else:
                fhat = [np.zeros(3), np.zeros(3)]

            cmds = []
            for i in range(2):
                if method.startswith("pid"):
                    cmd, integral[i] = pid_control(veh[i], refs[i], integral[i], gains, m, dtc, g)
                else:
                    cmd = adaptive_control(veh[i], refs[i], fhat[i], gains, m, g)
                cmds.append(cmd)
                if cmd.saturated:
                    report.saturated_steps += 1
            u = [c.u for c in cmds]
            if prev_u is not None:
                report.max_du = max(report.max_du, max(float(np.linalg.norm(u[i] - prev_u[i])) for i in range(2)))
            prev_u = u

            errs = [refs[i].p_d - veh[i].p for i in range(2)]
            edots = [refs[i].v_d - veh[i].v for i in range(2)]
            vp = [_vp(m, gains.k_p, errs[i], edots[i]) for i in range(2)]
            if validation and adaptive:
                vw = [est.weight_lyapunov(estimators[i], force_model.weights[i]) for i in range(2)]
            else:
                vw = [math.nan, math.nan]
            err_avg = 0.5 * (np.linalg.norm(errs[0]) + np.linalg.norm(errs[1]))
            rows.append(np.concatenate([[t], p1, p2, refs[0].p_d, refs[1].p_d, errs[0], errs[1],
                                        u[0], u[1], fo[0], fo[1], fhat[0], fhat[1],
                                        ftrue[0], ftrue[1], eps[0], eps[1], vp, vw, [err_avg]]))

            if adaptive and k % snap_every == 0:
                report.snapshots.append({"t": t, "vehicles": [est.snapshot(s) for s in estimators]})

            if margins:
                poly = force_model.polyline(p1, p2) if k > 0 else np.vstack([p1, p2])
                for w in sc.windows:
                    if not w.is_active(t):
                        continue
                    mg = w.margin(poly)
                    if mg is not None:
                        margins[w.name] = float(mg) if margins[w.name] is None else min(margins[w.name], float(mg))

            if on_step is not None:
                on_step(k, world, refs, u)

            for _ in range(nsub):
                ua = [lags[i](u[i], dtp) for i in range(2)]
                world.step(dtp, ua[0], ua[1])
    except DivergenceDetected as exc:
        report.success, report.failure = False, f"divergence: {exc}"
        log.warning("trial %d (%s) diverged: %s", trial, method, exc)
    except TautRod as exc:
        report.success, report.failure = False, f"overstretched: {exc}"
        log.warning("trial %d (%s) overstretched the strip: %s", trial, method, exc)

    report.records = np.array(rows).reshape(-1, len(COLUMNS))
    report.window_margins = margins
    report.windows = windows = {n: (None if mg is None else bool(mg >= 0.0)) for n, mg in margins.items()}
    for name, ok in windows.items():
        if ok is False and report.success:
            report.success, report.failure = False, f"window {name!r} clearance violated"
        elif ok is None and report.success and report.steps == steps and config.duration >= sc.duration - 1e-9:
            report.success, report.failure = False, f"window {name!r} never reached"
    report.phases = {name: report.phase_stats(a, b) for name, (a, b) in sc.phases.items()}
    return report, estimators


def _as_p1p2v1v2(state):
    return state[0], state[1], state[2], state[3]


# -- batches ----------------------------------------------------------------

@dataclass
class BatchReport:
    scenario: str
    trials: dict  # method -> list[TrialReport]
    config: dict

    def table(self) -> list:
        rows = []
        for meth, reps in self.trials.items():
            for r in reps:
                rows.append(r.summary())
        return rows

    def means(self, method: str) -> np.ndarray:
        return np.array([r.mean_error for r in self.trials[method]])

    def stds(self, method: str) -> np.ndarray:
        return np.array([r.std_error for r in self.trials[method]])

    def summary(self) -> dict:
        per_method = {}
        for meth, reps in self.trials.items():
            means = [r.mean_error for r in reps]
            per_method[meth] = {
                "trial_means": means, "trial_stds": [r.std_error for r in reps],
                "success": [r.success for r in reps],
                "final_mean": means[-1] if means else float("nan"),
                "overall_mean": float(np.mean(means)) if means else float("nan"),
            }
        return {"schema_version": SCHEMA_VERSION, "scenario": self.scenario,
                "methods": per_method, "trials": self.table()}


def _run_method(config: SimConfig, method: str) -> list:
    reps = []
    estimators = None
    for trial in range(int(config["trials"])):
        rep, estimators = run_trial(config, method, estimators, trial)
        reps.append(rep)
    return reps


def run_batch(config: SimConfig, jobs: int = 1) -> BatchReport:
    """Run ``trials`` trials for every configured method.

    Methods are independent and may run in separate processes (``jobs``);
    within a method trials run in order so estimator state carries over.
    """
    methods = list(config["methods"])
    if jobs > 1 and len(methods) > 1:
        from concurrent.futures import ProcessPoolExecutor
        from .config import resolve
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {m: pool.submit(_run_method_raw, config.snapshot(), m) for m in methods}
            results = {m: futs[m].result() for m in methods}
    else:
        results = {m: _run_method(config, m) for m in methods}
    return BatchReport(config.scenario.name, results, config.snapshot())


def _run_method_raw(raw: dict, method: str):
    from .config import resolve
    return _run_method(resolve(raw), method)


def lyapunov_trace(report: TrialReport) -> dict:
    """Per-step ``V = V^p + V^W`` for each vehicle and their sum.

    Raises
    ------
    UnavailableGroundTruth
        Outside validation mode, where the true weights are unknown.
    """
    if not report.validation:
        raise UnavailableGroundTruth("V^W needs the synthetic-force validation mode")
    vp = np.column_stack([report.column("Vp1"), report.column("Vp2")])
    vw = np.column_stack([report.column("VW1"), report.column("VW2")])
    if np.any(np.isnan(vw)):
        raise UnavailableGroundTruth("report carries no weight-error terms (non-adaptive method?)")
    v = vp + vw
    return {"t": report.column("t"), "Vp": vp, "VW": vw, "V": v, "total": v.sum(axis=1)}
