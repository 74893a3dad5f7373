"""Frames derived from the endpoint displacement vector.

Conventions
-----------
``r = p2 - p1`` always runs from vehicle 1 to vehicle 2. The bending plane
normal is ``y_P = (r x z) / |r x z|`` and ``x_P = y_P x z``, which makes
``x_P`` point *against* the horizontal projection of ``r``. Consequently a
level rod has ``alpha = pi`` rather than ``0``; the feature maps only use
harmonics of ``alpha`` so the wrap at ``+-pi`` is harmless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoincidentEndpoints, DegenerateDisplacement

EPS_GEOM = 1e-6
WORLD_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class PlaneFrame:
    rotation: np.ndarray  # columns x_P, y_P, z_P
    valid: bool = True

    @property
    def x(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.rotation[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.rotation[:, 2]


@dataclass(frozen=True)
class DisplacementFrame:
    rotation: np.ndarray  # columns x_r, y_P, z_r
    origin: np.ndarray
    alpha: float


def plane_frame(r, eps: float = EPS_GEOM) -> PlaneFrame:
    """Vertical plane containing ``r``.

    Raises
    ------
    DegenerateDisplacement
        If the horizontal part of ``r`` is shorter than ``eps``.
    """
    rx, ry, rz = float(r[0]), float(r[1]), float(r[2])
    # r x z = (ry, -rx, 0)
    nh = math.hypot(rx, ry)
    if nh <= eps:
        raise DegenerateDisplacement(f"|r x z| = {nh:.3e} <= {eps:.1e}")
    yx, yy = ry / nh, -rx / nh
    # x_P = y_P x z = (yy, -yx, 0)
    rot = np.array([[yy, yx, 0.0], [-yx, yy, 0.0], [0.0, 0.0, 1.0]])
    return PlaneFrame(rot, True)


def project_to_plane(frame: PlaneFrame, v) -> np.ndarray:
    """Express world vector ``v`` in the plane frame (``R_P^T v``)."""
    return frame.rotation.T @ np.asarray(v, dtype=float)


def leaning_angle(r, frame: PlaneFrame) -> float:
    """Angle of ``r`` above the horizontal, measured in the plane frame, in (-pi, pi]."""
    a = math.atan2(float(np.dot(r, frame.z)), float(np.dot(r, frame.x)))
    return math.pi if a == -math.pi else a


def rotate_minus_quarter(axis, v) -> np.ndarray:
    """Rotate ``v`` by -pi/2 about unit ``axis`` (Rodrigues with cos=0, sin=-1)."""
    axis = np.asarray(axis, dtype=float)
    v = np.asarray(v, dtype=float)
    return -np.cross(axis, v) + axis * float(axis @ v)


def displacement_frame(p1, p2, eps: float = EPS_GEOM) -> DisplacementFrame:
    """Frame {O}: x along ``r``, y the plane normal, origin at ``p1``.

    Raises
    ------
    CoincidentEndpoints
        ``|p2 - p1| <= eps``.
    DegenerateDisplacement
        ``r`` is vertical.
    """
    p1 = np.asarray(p1, dtype=float)
    r = np.asarray(p2, dtype=float) - p1
    norm = float(np.linalg.norm(r))
    if norm <= eps:
        raise CoincidentEndpoints(f"|r| = {norm:.3e} <= {eps:.1e}")
    pf = plane_frame(r, eps)
    x_r = r / norm
    z_r = rotate_minus_quarter(pf.y, x_r)
    rot = np.column_stack([x_r, pf.y, z_r])
    return DisplacementFrame(rot, p1.copy(), leaning_angle(r, pf))


def is_rotation(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        return False
    ortho = np.max(np.abs(m.T @ m - np.eye(3)))
    return bool(ortho <= tol and abs(np.linalg.det(m) - 1.0) <= tol)
