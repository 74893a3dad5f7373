"""Online approximation of the strip's endpoint force.

Two regressors are provided:

* ``plane`` -- powers of the in-plane components of ``r`` and ``rdot``,
  estimated in the bending-plane frame;
* ``physical`` -- powers of the endpoint distance and its rate plus
  harmonics of the leaning angle, estimated in the displacement frame.

The weights are learned with continuous-time recursive least squares,
discretised at the control period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import CovarianceBlowup
from .geom import EPS_GEOM, displacement_frame, plane_frame

GRAVITY = 9.81
PLANE = "plane"
PHYSICAL = "physical"
KINDS = (PLANE, PHYSICAL)
COV_FLOOR = 1e-10
COV_CEILING = 1e9


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    kind: str
    order: int

    def __len__(self):
        return self.values.size


def _descending_powers(x: float, n: int) -> list:
    return [x ** k for k in range(n, 0, -1)]


def features_plane(r_p, rdot_p, n: int) -> FeatureVector:
    """``[r_x^n..r_x, r_z^n..r_z, rdot_x^n..rdot_x, rdot_z^n..rdot_z, 1]``.

    Inputs are plane-frame vectors; their y components are ignored.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    vals = (_descending_powers(float(r_p[0]), n) + _descending_powers(float(r_p[2]), n)
            + _descending_powers(float(rdot_p[0]), n) + _descending_powers(float(rdot_p[2]), n)
            + [1.0])
    return FeatureVector(np.array(vals), PLANE, n)


def features_physical(r_mag: float, rdot_mag: float, alpha: float, n: int) -> FeatureVector:
    """``[r^n..r, rdot^n..rdot, cos(n a)..cos(a), sin(n a)..sin(a), 1]``."""
    if n < 1:
        raise ValueError("order must be >= 1")
    if r_mag < 0:
        raise ValueError("distance must be non-negative")
    ks = range(n, 0, -1)
    vals = (_descending_powers(float(r_mag), n) + _descending_powers(float(rdot_mag), n)
            + [math.cos(k * alpha) for k in ks] + [math.sin(k * alpha) for k in ks] + [1.0])
    return FeatureVector(np.array(vals), PHYSICAL, n)


def regressor(kind: str, n: int, p1, p2, v1, v2):
    """Feature vector and estimation frame for the current endpoint states.

    Returns ``(phi, R)`` where ``R`` maps estimation-frame vectors to the
    world frame (the plane frame for ``plane``, the displacement frame for
    ``physical``).
    """
    r = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    rdot = np.asarray(v2, dtype=float) - np.asarray(v1, dtype=float)
    if kind == PLANE:
        rot = plane_frame(r).rotation
        return features_plane(rot.T @ r, rot.T @ rdot, n), rot
    if kind == PHYSICAL:
        df = displacement_frame(p1, p2)
        dist = float(np.linalg.norm(r))
        rate = float(r @ rdot) / max(dist, EPS_GEOM)
        return features_physical(dist, rate, df.alpha, n), df.rotation
    raise ValueError(f"unknown feature kind {kind!r}")


@dataclass(frozen=True)
class ForceObservation:
    f_o: np.ndarray
    timestamp: float = 0.0


def observe_force(m: float, pddot_meas, u_applied, timestamp: float = 0.0,
                  g: float = GRAVITY) -> ForceObservation:
    """Invert the translational dynamics: ``f_o = m a + m g z - u``."""
    if m <= 0:
        raise ValueError("mass must be positive")
    f = m * np.asarray(pddot_meas, dtype=float) - np.asarray(u_applied, dtype=float)
    f[2] += m * g
    return ForceObservation(f, timestamp)


@dataclass(frozen=True)
class EstimatorState:
    """RLS state for one vehicle.

    ``scheme`` selects the time discretisation of the covariance ODE:
    ``"euler"`` is a forward-Euler step; ``"exact"`` integrates the ODE
    exactly over the step for a held regressor, which stays well-posed for
    arbitrarily large covariances.
    """

    W_hat: np.ndarray
    P: np.ndarray
    lam: float
    kind: str
    order: int
    scheme: str = "euler"
    innovation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    updates: int = 0

    @property
    def size(self) -> int:
        return 4 * self.order + 1


def new_estimator(kind: str = PHYSICAL, order: int = 3, lam: float = 0.0, p0: float = 1.0,
                  scheme: str = "euler") -> EstimatorState:
    """Zero weights and ``P = p0 * I``."""
    if kind not in KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    if order < 1:
        raise ValueError("order must be >= 1")
    if lam < 0:
        raise ValueError("forgetting factor must be >= 0")
    if p0 <= 0:
        raise ValueError("initial covariance must be positive")
    if scheme not in ("euler", "exact"):
        raise ValueError(f"unknown scheme {scheme!r}")
    size = 4 * order + 1
    return EstimatorState(np.zeros((size, 3)), p0 * np.eye(size), float(lam), kind, order, scheme)


def _condition_covariance(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    w, v = np.linalg.eigh(P)
    if w[0] < COV_FLOOR:
        P = (v * np.maximum(w, COV_FLOOR)) @ v.T
        P = 0.5 * (P + P.T)
    return P


def rls_step(state: EstimatorState, phi: FeatureVector, f_o_frame, dt: float) -> EstimatorState:
    """One RLS update with an observation already expressed in the estimation frame.

    Raises
    ------
    CovarianceBlowup
        Any covariance entry exceeds ``1e9``.
    """
    if phi.kind != state.kind or phi.order != state.order:
        raise ValueError(f"feature {phi.kind}/{phi.order} does not match estimator "
                         f"{state.kind}/{state.order}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = phi.values
    P = state.P
    eps = np.asarray(f_o_frame, dtype=float) - state.W_hat.T @ x
    Px = P @ x
    if state.scheme == "euler":
        W = state.W_hat + dt * np.outer(Px, eps)
        P_new = P + dt * (state.lam * P - np.outer(Px, Px))
    else:
        if state.lam > 0:
            decay = math.exp(state.lam * dt)
            gain = -math.expm1(-state.lam * dt) / state.lam
            P = decay * P
            Px = decay * Px
        else:
            gain = dt
        P_new = P - (gain / (1.0 + gain * float(x @ Px))) * np.outer(Px, Px)
        W = state.W_hat + gain * np.outer(P_new @ x, eps)
    P_new = _condition_covariance(P_new)
    if not np.all(np.isfinite(P_new)) or np.max(np.abs(P_new)) > COV_CEILING:
        raise CovarianceBlowup(f"max |P| = {np.max(np.abs(P_new)):.3e} after {state.updates} updates")
    return replace(state, W_hat=W, P=P_new, innovation=eps, updates=state.updates + 1)


def predict_frame(state: EstimatorState, phi: FeatureVector) -> np.ndarray:
    return state.W_hat.T @ phi.values


def predict_force(state: EstimatorState, phi: FeatureVector, frame) -> np.ndarray:
    """World-frame force estimate ``R (W_hat^T phi)``."""
    if phi.kind != state.kind or phi.order != state.order:
        raise ValueError("feature kind/order does not match estimator")
    return np.asarray(frame) @ (state.W_hat.T @ phi.values)


def excitation_metric(phis: Iterable) -> float:
    """Smallest eigenvalue of the window-averaged ``phi phi^T``; positive means PE."""
    rows = [p.values if isinstance(p, FeatureVector) else np.asarray(p, dtype=float) for p in phis]
    if not rows:
        raise ValueError("empty window")
    X = np.vstack(rows)
    gram = X.T @ X / X.shape[0]
    return max(float(np.linalg.eigvalsh(gram)[0]), 0.0)


def weight_lyapunov(state: EstimatorState, W_true) -> float:
    """``tr(W_err^T P^-1 W_err)`` with ``W_err = W_true - W_hat``."""
    err = np.asarray(W_true, dtype=float) - state.W_hat
    return float(np.trace(err.T @ np.linalg.solve(state.P, err)))


def snapshot(state: EstimatorState) -> dict:
    return {"kind": state.kind, "order": state.order, "lambda": state.lam,
            "updates": state.updates, "W_hat": state.W_hat.tolist(),
            "P_diag": np.diag(state.P).tolist()}
