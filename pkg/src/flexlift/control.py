"""Per-vehicle force commands: adaptive PD with force compensation, and PID."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

GRAVITY = 9.81
LYAPUNOV_KD_BOUND = 0.25

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Gains:
    k_p: float
    k_d: float
    k_i: float = 0.0
    u_max: float = float("inf")
    i_max: float = float("inf")

    def validate(self, m: float, adaptive: bool = True):
        """Raise ``ValueError`` naming the first violated bound."""
        if not self.k_p > 0:
            raise ValueError(f"k_p must be > 0, got {self.k_p}")
        if adaptive and not self.k_d > LYAPUNOV_KD_BOUND:
            raise ValueError(f"k_d must exceed the Lyapunov bound {LYAPUNOV_KD_BOUND}, got {self.k_d}")
        if not adaptive and not self.k_d >= 0:
            raise ValueError(f"k_d must be >= 0, got {self.k_d}")
        if self.k_i < 0:
            raise ValueError(f"k_i must be >= 0, got {self.k_i}")
        if not self.u_max > m * GRAVITY:
            raise ValueError(f"u_max must exceed the hover force m*g = {m * GRAVITY:.4f} N, got {self.u_max}")
        if not self.i_max > 0:
            raise ValueError(f"i_max must be > 0, got {self.i_max}")


@dataclass(frozen=True)
class ControlCommand:
    u: np.ndarray
    f_hat_o: np.ndarray
    saturated: bool = False


def saturate(u: np.ndarray, u_max: float):
    """Scale ``u`` back onto the ball of radius ``u_max``, keeping its direction."""
    norm = float(np.linalg.norm(u))
    if norm > u_max:
        log.debug("command saturated: |u| = %.4f N > %.4f N", norm, u_max)
        return u * (u_max / norm), True
    return u, False


def _feedforward(ref, m: float, g: float) -> np.ndarray:
    ff = m * np.asarray(ref.a_d, dtype=float)
    ff[2] += m * g
    return ff


def adaptive_control(state, ref, f_hat_o, gains: Gains, m: float, g: float = GRAVITY) -> ControlCommand:
    """PD tracking plus feedforward, minus the estimated object force."""
    e = ref.p_d - state.p
    e_dot = ref.v_d - state.v
    f_hat_o = np.asarray(f_hat_o, dtype=float)
    u = gains.k_p * e + gains.k_d * e_dot + _feedforward(ref, m, g) - f_hat_o
    u, sat = saturate(u, gains.u_max)
    return ControlCommand(u, f_hat_o, sat)


def pid_control(state, ref, integral, gains: Gains, m: float, dt: float,
                g: float = GRAVITY):
    """PID tracking plus feedforward.

    The integral of the position error is advanced by ``dt`` and clamped per
    axis to ``+-i_max`` before use. Returns ``(command, new_integral)``.
    """
    e = ref.p_d - state.p
    e_dot = ref.v_d - state.v
    integral = np.clip(np.asarray(integral, dtype=float) + e * dt, -gains.i_max, gains.i_max)
    u = gains.k_p * e + gains.k_d * e_dot + gains.k_i * integral + _feedforward(ref, m, g)
    u, sat = saturate(u, gains.u_max)
    return ControlCommand(u, np.zeros(3), sat), integral


class ThrustLag:
    """First-order lag on the commanded force (emulates attitude/thrust dynamics)."""

    def __init__(self, tau: float, initial: Optional[np.ndarray] = None):
        self.tau = tau
        self.value = None if initial is None else np.asarray(initial, dtype=float).copy()

    def __call__(self, u: np.ndarray, dt: float) -> np.ndarray:
        if self.value is None or self.tau <= 0:
            self.value = np.asarray(u, dtype=float).copy()
        else:
            a = dt / (self.tau + dt)
            self.value = self.value + a * (u - self.value)
        return self.value
