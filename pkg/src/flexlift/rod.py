"""Ground-truth physics of the bendable strip.

The strip is a planar discrete elastica: ``N`` rigid segments of equal
length joined by torsional springs, loaded by gravity, with both ends
pinned to the vehicles. Each call re-solves the quasi-static equilibrium for
the current endpoint positions and returns the forces the strip exerts on
the vehicles. Nothing in here is visible to the estimator or controllers;
they only ever receive the resulting forces through the vehicle dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _rodkernel
from .errors import CoincidentEndpoints, DegenerateDisplacement, NoConvergence, TautRod
from .geom import EPS_GEOM

GRAVITY = 9.81
MAX_ITER = 200
TOL_GRAD = 1e-10
TOL_CON = 1e-12


def _chord(kappa: np.ndarray, ell: float) -> tuple[float, float]:
    """Chord (dx, dz) of a polygon starting horizontally with turning angles ``kappa``."""
    theta = np.concatenate([[0.0], np.cumsum(kappa)])
    return ell * float(np.sum(np.cos(theta))), ell * float(np.sum(np.sin(theta)))


def _scale_for_chord(profile: np.ndarray, ell: float, target: float) -> float:
    """Scale ``s`` such that the polygon with turning ``s * profile`` has chord ``target``."""
    n = profile.size + 1
    length = n * ell
    if target >= length * (1.0 - 1e-12):
        return 0.0

    def gap(s):
        return math.hypot(*_chord(s * profile, ell)) - target

    # chord shrinks monotonically until the polygon closes on itself
    hi = 2.0 * math.pi / (float(np.sum(profile)) + 1e-300)
    return brentq(gap, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=200)


@dataclass
class RodSpec:
    """Geometry, stiffness and mass distribution of the strip.

    ``bending_stiffness`` holds one torsional stiffness per joint (``N - 1``
    entries) and ``segment_mass`` one mass per segment (``N`` entries).
    ``curvature_profile`` sets the relative natural turning of each joint; it
    is rescaled so that the unloaded, weightless strip has endpoint distance
    ``r0``.
    """

    length: float
    r0: float
    bending_stiffness: np.ndarray
    segment_mass: np.ndarray
    curvature_profile: Optional[np.ndarray] = None
    damping: float = 0.05
    g: float = GRAVITY
    natural_turning: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.bending_stiffness = np.asarray(self.bending_stiffness, dtype=float)
        self.segment_mass = np.asarray(self.segment_mass, dtype=float)
        n = self.segment_mass.size
        if self.curvature_profile is None:
            self.curvature_profile = np.ones(n - 1)
        self.curvature_profile = np.asarray(self.curvature_profile, dtype=float)
        if n < 8:
            raise ValueError(f"segment count must be >= 8, got {n}")
        if self.bending_stiffness.shape != (n - 1,):
            raise ValueError("bending_stiffness needs one entry per joint (N - 1)")
        if self.curvature_profile.shape != (n - 1,) or np.any(self.curvature_profile < 0):
            raise ValueError("curvature_profile needs N - 1 non-negative entries")
        if np.any(self.bending_stiffness <= 0):
            raise ValueError("bending stiffness must be positive")
        if np.any(self.segment_mass < 0):
            raise ValueError("segment masses must be non-negative")
        if not 0.0 < self.r0 <= self.length:
            raise ValueError(f"need 0 < r0 <= L0, got r0={self.r0}, L0={self.length}")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        scale = _scale_for_chord(self.curvature_profile, self.segment_length, self.r0)
        self.natural_turning = scale * self.curvature_profile
        # mass carried "downstream" of each segment, for the gravity gradient
        tail = np.concatenate([np.cumsum(self.segment_mass[::-1])[::-1][1:], [0.0]])
        self._gravity_weight = 0.5 * self.segment_mass + tail

    @property
    def segments(self) -> int:
        return self.segment_mass.size

    @property
    def segment_length(self) -> float:
        return self.length / self.segments

    @property
    def mass(self) -> float:
        return float(np.sum(self.segment_mass))

    @classmethod
    def two_zone(cls, length=1.2, r0=1.05, segments=16, stiffness=(0.05, 0.035),
                 mass=(0.030, 0.018), split=0.4, damping=0.05, g=GRAVITY):
        """Nonhomogeneous strip: the first ``split`` fraction of its length is
        stiffer and heavier than the rest.

        ``stiffness`` is given as bending rigidity EI in N*m^2 per zone and
        converted to per-joint springs ``EI / ell``; ``mass`` is the total
        mass of each zone in kg.
        """
        ell = length / segments
        cut = int(round(split * segments))
        kb = np.where(np.arange(segments - 1) < cut, stiffness[0], stiffness[1]) / ell
        ms = np.empty(segments)
        ms[:cut] = mass[0] / cut
        ms[cut:] = mass[1] / (segments - cut)
        return cls(length, r0, kb, ms, damping=damping, g=g)


@dataclass
class RodConfig:
    """An equilibrium: absolute segment angles inside the bending plane."""

    theta: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    multipliers: np.ndarray  # d E* / d (chord_h, chord_z)
    iterations: int = 0
    reduced_gradient: float = 0.0

    @property
    def horizontal(self) -> np.ndarray:
        rh = self.p2[:2] - self.p1[:2]
        return np.array([rh[0], rh[1], 0.0]) / math.hypot(rh[0], rh[1])


@dataclass
class RodReaction:
    f1: np.ndarray
    f2: np.ndarray
    energy: float


def _chord_coordinates(p1, p2):
    r = p2 - p1
    dist = float(np.linalg.norm(r))
    if dist <= EPS_GEOM:
        raise CoincidentEndpoints(f"|r| = {dist:.3e}")
    dh = math.hypot(r[0], r[1])
    if dh <= EPS_GEOM:
        raise DegenerateDisplacement(f"horizontal separation {dh:.3e}")
    return dh, float(r[2]), dist


def cold_start(spec: RodSpec, dh: float, dz: float) -> np.ndarray:
    """Natural shape rescaled to the requested chord, rotated onto it.

    The result satisfies the endpoint constraints exactly.
    """
    ell = spec.segment_length
    s = _scale_for_chord(spec.curvature_profile, ell, math.hypot(dh, dz))
    kappa = s * spec.curvature_profile
    theta = np.concatenate([[0.0], np.cumsum(kappa)])
    cx, cz = _chord(kappa, ell)
    return theta + (math.atan2(dz, dh) - math.atan2(cz, cx))


def solve_equilibrium(spec: RodSpec, p1, p2, warm_start: Optional[RodConfig] = None) -> RodConfig:
    """Quasi-static equilibrium of the strip pinned at ``p1`` and ``p2``.

    Raises
    ------
    TautRod
        Endpoints at least a curve length apart.
    NoConvergence
        Newton iteration cap reached.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    dh, dz, dist = _chord_coordinates(p1, p2)
    if dist >= spec.length - EPS_GEOM:
        raise TautRod(f"|r| = {dist:.6f} m >= L0 - eps = {spec.length - EPS_GEOM:.6f} m")
    if warm_start is None:
        theta0 = cold_start(spec, dh, dz)
    else:
        theta0 = warm_start.theta
    theta, mu, iters, status, gnorm = _rodkernel.solve(
        theta0, dh, dz, spec.segment_length, spec.bending_stiffness, spec.natural_turning,
        spec._gravity_weight, spec.g, MAX_ITER, TOL_GRAD, TOL_CON)
    if status != _rodkernel.OK and warm_start is not None:
        # a stale warm start can sit in the wrong basin; retry from the natural shape
        theta, mu, iters, status, gnorm = _rodkernel.solve(
            cold_start(spec, dh, dz), dh, dz, spec.segment_length, spec.bending_stiffness,
            spec.natural_turning, spec._gravity_weight, spec.g, MAX_ITER, TOL_GRAD, TOL_CON)
    if status != _rodkernel.OK:
        raise NoConvergence(f"no equilibrium after {iters} iterations (|grad| = {gnorm:.2e})")
    return RodConfig(theta, p1.copy(), p2.copy(), mu, int(iters), float(gnorm))


def rod_energy(spec: RodSpec, config: RodConfig) -> float:
    """Bending plus gravitational energy, heights measured from world z = 0."""
    e = _rodkernel.energy(config.theta, spec.segment_length, spec.bending_stiffness,
                          spec.natural_turning, spec._gravity_weight, spec.g)
    return float(e + spec.mass * spec.g * config.p1[2])


def vertices(spec: RodSpec, config: RodConfig) -> np.ndarray:
    """World positions of the ``N + 1`` vertices."""
    ell = spec.segment_length
    eh = config.horizontal
    steps = ell * (np.cos(config.theta)[:, None] * eh + np.sin(config.theta)[:, None] * np.array([0.0, 0.0, 1.0]))
    return config.p1 + np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])


def plane_damping(spec: RodSpec, config: RodConfig, rdot, eh=None) -> np.ndarray:
    """Viscous force on vehicle 2 opposing the in-plane part of ``rdot``."""
    if spec.damping == 0.0:
        return np.zeros(3)
    if eh is None:
        eh = config.horizontal
    rdot = np.asarray(rdot, dtype=float)
    in_plane = float(rdot @ eh) * eh + np.array([0.0, 0.0, rdot[2]])
    return -spec.damping * in_plane


def endpoint_reactions(spec: RodSpec, config: RodConfig, rdot=None,
                       with_energy: bool = True) -> RodReaction:
    """Forces exerted by the strip on vehicles 1 and 2.

    The static part is ``-dE*/dp_i``, read off the constraint multipliers of
    the equilibrium solve. With ``rdot`` given, a viscous term opposing the
    in-plane endpoint separation rate is added with equal and opposite sign at
    the two ends. ``energy`` is NaN when ``with_energy`` is false.
    """
    eh = config.horizontal
    mh, mz = float(config.multipliers[0]), float(config.multipliers[1])
    grad2 = mh * eh + np.array([0.0, 0.0, mz])
    f2 = -grad2
    f1 = grad2 - np.array([0.0, 0.0, spec.mass * spec.g])
    if rdot is not None:
        fd = plane_damping(spec, config, rdot, eh)
        f2 = f2 + fd
        f1 = f1 - fd
    return RodReaction(f1, f2, rod_energy(spec, config) if with_energy else math.nan)


def equilibrium_energy(spec: RodSpec, p1, p2, warm_start: Optional[RodConfig] = None) -> float:
    """Constrained minimum energy ``E*(p1, p2)``."""
    return rod_energy(spec, solve_equilibrium(spec, p1, p2, warm_start))


class RodSolver:
    """Stateful wrapper that warm-starts each solve from the previous one.

    One instance per simulated strip.
    """

    def __init__(self, spec: RodSpec):
        self.spec = spec
        self.config: Optional[RodConfig] = None

    def reset(self):
        self.config = None

    def reaction(self, p1, p2, rdot=None, with_energy: bool = True) -> RodReaction:
        self.config = solve_equilibrium(self.spec, p1, p2, self.config)
        return endpoint_reactions(self.spec, self.config, rdot, with_energy)

    def vertices(self) -> np.ndarray:
        if self.config is None:
            raise RuntimeError("no equilibrium solved yet")
        return vertices(self.spec, self.config)


def rod_spec_from_dict(d: dict) -> RodSpec:
    """Build a ``RodSpec`` from the config-file mapping (two-zone or explicit arrays)."""
    d = dict(d)
    if "bending_stiffness" in d:
        return RodSpec(d["length"], d["r0"], np.asarray(d["bending_stiffness"]),
                       np.asarray(d["segment_mass"]), d.get("curvature_profile"),
                       d.get("damping", 0.05), d.get("g", GRAVITY))
    return RodSpec.two_zone(
        length=d.get("length", 1.2), r0=d.get("r0", 1.05), segments=d.get("segments", 16),
        stiffness=tuple(d.get("zone_rigidity", (0.05, 0.035))), mass=tuple(d.get("zone_mass", (0.030, 0.018))),
        split=d.get("split", 0.4), damping=d.get("damping", 0.05), g=d.get("g", GRAVITY))

