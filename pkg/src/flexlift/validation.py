"""Property checks run against the synthetic linear force and the noiseless rod.

Each check returns a :class:`PropertyResult`; the CLI prints them and the
acceptance tests assert on them.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SimConfig, deep_merge, resolve
from .control import LYAPUNOV_KD_BOUND
from .sim import lyapunov_trace, make_force_model, run_trial

log = logging.getLogger(__name__)

# Exp-3-style free flight, widened so every feature is excited within 20 s:
# two distance tones, large unequal height swings (the leaning angle sweeps
# about +-60 deg) and x/y oscillation. Only meaningful without the strip.
RICH_EXCITATION = {
    "pe_end": 20.0, "distance_mean": 1.05, "distance_amp": 0.22, "distance_period": 4.3,
    "distance_amp2": 0.08, "distance_period2": 1.9, "height_amp": 0.36, "height_freqs": [0.41, 0.67],
    "x_amp": 0.5, "x_period": 9.0, "y_amp": 0.3, "y_period": 7.0,
}

RLS_TOLERANCE = 1e-3
OBSERVER_TOLERANCE = 1e-6


@dataclass
class PropertyResult:
    name: str
    passed: bool
    value: float = math.nan
    detail: str = ""
    expected_fail: bool = False
    skipped: bool = False
    elapsed: float = 0.0
    data: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        """Counts toward the exit status: probes and skips never fail the suite."""
        return self.passed or self.expected_fail or self.skipped

    def line(self) -> str:
        if self.skipped:
            tag = "SKIP"
        elif self.expected_fail:
            tag = "PROBE" + ("(held)" if self.passed else "(violated)")
        else:
            tag = "PASS" if self.passed else "FAIL"
        return f"{tag:16s} {self.name}: {self.detail} [{self.elapsed:.1f}s]"


def validation_config(method: str, order: int = 3, duration: float = 20.0, **over) -> SimConfig:
    """Synthetic-force configuration over the rich excitation."""
    raw = {
        "scenario": {"name": "exp3", "params": dict(RICH_EXCITATION)},
        "duration": duration, "noise_sigma": 0.0, "methods": [method],
        "validation": {"enabled": True},
        "estimator": {"order": order, "lambda": 0.0, "p0": 5e8, "scheme": "exact"},
        # the synthetic force is smooth; one physics step per control step suffices
        "dt_physics": 0.01,
    }
    return resolve(deep_merge(raw, over))


def check_rls_consistency(method: str, order: int, duration: float = 20.0, **over) -> PropertyResult:
    """Weights recovered to ``RLS_TOLERANCE`` (Frobenius) from exact data."""
    t0 = time.perf_counter()
    cfg = validation_config(method, order, duration, **over)
    truth = make_force_model(cfg, method)
    report, est = run_trial(cfg, method, force_model=truth)
    err = max(float(np.linalg.norm(est[i].W_hat - truth.weights[i])) for i in range(2))
    steps = report.steps
    el = time.perf_counter() - t0
    return PropertyResult(f"rls-consistency {method} n={order}", err < RLS_TOLERANCE, err,
                          f"|W_hat - W|_F = {err:.2e} after {steps} control steps (< {RLS_TOLERANCE:g})",
                          elapsed=el, data={"steps": steps})


def lyapunov_run(method: str, k_d: float, dt: float, duration: float = 2.0, lam: float = 0.0,
                 scheme: str = "exact", initial_error=(0.2, -0.1, 0.15), order: int = 3) -> dict:
    """Per-step increments of ``V`` and ``V^p`` at control period ``dt`` (no delay, no noise)."""
    cfg = validation_config(method, order, duration, **{
        "dt_physics": dt, "dt_control": dt, "initial_error": list(initial_error),
        "gains": {"adaptive": {"k_d": k_d, "u_max": 100.0}},
        "estimator": {"p0": 1.0, "lambda": lam, "scheme": scheme, "delay_steps": 0},
    })
    report, _ = run_trial(cfg, method)
    tr = lyapunov_trace(report)
    dv = np.diff(tr["V"], axis=0)
    dvp = np.diff(tr["Vp"], axis=0)
    return {"dt": dt, "violation": max(float(dv.max()), 0.0), "vp_increase": max(float(dvp.max()), 0.0),
            "V0": float(tr["total"][0]), "V_end": float(tr["total"][-1]), "failed": not report.success}


def check_lyapunov(k_d: float, method: str = "adaptive-phib", dts=(1e-3, 5e-4), lam: float = 0.0,
                   duration: float = 2.0, slack_ratio: float = 4.0) -> PropertyResult:
    """``V(t+dt) <= V(t) + C dt^2`` with ``C`` bounded and quartering under dt halving."""
    t0 = time.perf_counter()
    name = f"lyapunov k_d={k_d:g}"
    if lam > 0:
        return PropertyResult(name, False, detail="skipped: the decrease argument assumes lambda = 0",
                              skipped=True)
    runs = [lyapunov_run(method, k_d, dt, duration) for dt in dts]
    viol = [r["violation"] for r in runs]
    consts = [v / r["dt"] ** 2 for v, r in zip(viol, runs)]
    quartered = viol[1] <= viol[0] / slack_ratio + 1e-15
    bounded = consts[1] <= consts[0] * 1.5 + 1e-9
    passed = quartered and bounded and not any(r["failed"] for r in runs)
    detail = (f"max V increase {viol[0]:.2e} (dt={dts[0]:g}), {viol[1]:.2e} (dt={dts[1]:g}); "
              f"C = {consts[0]:.3g}, {consts[1]:.3g}; max V^p increase {runs[0]['vp_increase']:.2e}")
    below = k_d <= LYAPUNOV_KD_BOUND
    if below:
        log.info("k_d = %g is below the bound %g; reporting as a probe", k_d, LYAPUNOV_KD_BOUND)
    return PropertyResult(name, passed, max(viol), detail, expected_fail=below,
                          elapsed=time.perf_counter() - t0, data={"runs": runs, "C": consts})


def check_observer(duration: float = 40.0, method: str = "adaptive-phib", **over) -> PropertyResult:
    """Noiseless, zero-delay observer reproduces the strip reaction on the Exp-1 analog."""
    t0 = time.perf_counter()
    raw = deep_merge({"scenario": {"name": "exp1"}, "duration": duration, "noise_sigma": 0.0,
                      "methods": [method], "estimator": {"delay_steps": 0}}, over)
    cfg = resolve(raw)
    report, _ = run_trial(cfg, method)
    gap = 0.0
    for i in (1, 2):
        d = report.block("fo", i)[1:] - report.block("ftrue", i)[1:]
        gap = max(gap, float(np.max(np.abs(d))))
    passed = gap <= OBSERVER_TOLERANCE and report.success
    return PropertyResult("observer-exactness", passed, gap,
                          f"max |f_o - reaction| = {gap:.2e} N over {report.steps} steps (<= {OBSERVER_TOLERANCE:g})",
                          elapsed=time.perf_counter() - t0)


def run_suite(k_d: float = 1.0, lam: float = 0.0, orders=(2, 3), observer_duration: float = 40.0,
              quick: bool = False) -> list:
    """The default validation suite: RLS consistency, Lyapunov decrease, observer exactness."""
    results = []
    for method in ("adaptive-phi", "adaptive-phib"):
        for n in orders:
            results.append(check_rls_consistency(method, n))
    results.append(check_lyapunov(k_d, lam=lam, duration=1.0 if quick else 2.0))
    results.append(check_observer(5.0 if quick else observer_duration))
    return results
